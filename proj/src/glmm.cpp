#include "crt/glmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "crt/rng.hpp"

namespace crt {
namespace {

double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

bool separated(const Eigen::VectorXd& eta, double bound) {
    return !eta.allFinite() || eta.cwiseAbs().maxCoeff() > bound;
}

// Random-intercept logistic likelihood with rows regrouped by cluster.
class RandomInterceptProblem {
public:
    RandomInterceptProblem(std::span<const int> y, const Eigen::MatrixXd& x, std::span<const int> cluster,
                           std::size_t n_clusters, int nodes)
        : n_clusters_(n_clusters), rule_(gauss_hermite(nodes)) {
        const auto n = static_cast<std::size_t>(x.rows());
        std::vector<std::vector<Eigen::Index>> members(n_clusters);
        for (std::size_t r = 0; r < n; ++r) {
            const int c = cluster[r];
            if (c < 0 || static_cast<std::size_t>(c) >= n_clusters) throw std::invalid_argument("cluster id out of range");
            members[static_cast<std::size_t>(c)].push_back(static_cast<Eigen::Index>(r));
        }
        x_.resize(x.rows(), x.cols());
        y_.resize(x.rows());
        Eigen::Index pos = 0;
        offsets_.push_back(0);
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (members[c].empty()) continue;
            for (Eigen::Index r : members[c]) {
                x_.row(pos) = x.row(r);
                y_[pos] = y[static_cast<std::size_t>(r)];
                ++pos;
            }
            offsets_.push_back(static_cast<std::size_t>(pos));
            ids_.push_back(c);
        }
        modes_.assign(ids_.size(), 0.0);
    }

    std::size_t dim() const { return static_cast<std::size_t>(x_.cols()) + 1; }

    /// Log-likelihood at theta = (eta, log sigma^2); fills the fixed-node
    /// gradient when `grad` is non-null.
    double loglik(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
        const auto q = x_.cols();
        const Eigen::VectorXd eta = theta.head(q);
        const double sigma = std::exp(0.5 * theta[q]);
        const Eigen::VectorXd base = x_ * eta;
        const std::size_t k_nodes = rule_.nodes.size();
        constexpr double log_sqrt_2pi = 0.91893853320467274178;

        if (grad) grad->setZero(static_cast<Eigen::Index>(dim()));
        double total = 0.0;
        std::vector<double> log_terms(k_nodes);
        std::vector<double> pbar;
        for (std::size_t c = 0; c < ids_.size(); ++c) {
            const auto lo = static_cast<Eigen::Index>(offsets_[c]);
            const auto n = static_cast<Eigen::Index>(offsets_[c + 1] - offsets_[c]);
            const auto b = base.segment(lo, n);
            const auto m = y_.segment(lo, n);

            auto g_value = [&](double u) {
                double s = -0.5 * u * u;
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double lp = b[j] + sigma * u;
                    s += m[j] * lp - log1pexp(lp);
                }
                return s;
            };

            // Mode of the (strictly concave) log integrand, safeguarded Newton.
            double u = modes_[c];
            double gu = g_value(u);
            double curvature = 1.0;
            for (int it = 0; it < 60; ++it) {
                double score = -u;
                double info = 1.0;
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double p = expit(b[j] + sigma * u);
                    score += sigma * (m[j] - p);
                    info += sigma * sigma * p * (1.0 - p);
                }
                curvature = info;
                double step = score / info;
                if (std::fabs(step) < 1e-10) break;
                double next = u + step;
                double g_next = g_value(next);
                int halvings = 0;
                while (g_next < gu && halvings < 30) {
                    step *= 0.5;
                    next = u + step;
                    g_next = g_value(next);
                    ++halvings;
                }
                u = next;
                gu = g_next;
            }
            modes_[c] = u;
            const double scale = std::numbers::sqrt2 / std::sqrt(curvature);

            double max_term = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < k_nodes; ++k) {
                const double z = rule_.nodes[k];
                const double uk = u + scale * z;
                log_terms[k] = std::log(rule_.weights[k]) + z * z + g_value(uk);
                max_term = std::max(max_term, log_terms[k]);
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < k_nodes; ++k) sum += std::exp(log_terms[k] - max_term);
            total += max_term + std::log(sum) + std::log(scale) - log_sqrt_2pi;

            if (grad) {
                pbar.assign(static_cast<std::size_t>(n), 0.0);
                double dsigma = 0.0;
                for (std::size_t k = 0; k < k_nodes; ++k) {
                    const double wk = std::exp(log_terms[k] - max_term) / sum;
                    const double uk = u + scale * rule_.nodes[k];
                    double resid = 0.0;
                    for (Eigen::Index j = 0; j < n; ++j) {
                        const double p = expit(b[j] + sigma * uk);
                        pbar[static_cast<std::size_t>(j)] += wk * p;
                        resid += m[j] - p;
                    }
                    dsigma += wk * resid * uk;
                }
                for (Eigen::Index j = 0; j < n; ++j)
                    grad->head(q) += (m[j] - pbar[static_cast<std::size_t>(j)]) * x_.row(lo + j).transpose();
                (*grad)[q] += 0.5 * sigma * dsigma;
            }
        }
        return total;
    }

    Eigen::VectorXd eblups(const Eigen::VectorXd& theta) {
        // Refresh modes at theta, then scale to the alpha metric.
        loglik(theta, nullptr);
        const double sigma = std::exp(0.5 * theta[x_.cols()]);
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_clusters_));
        for (std::size_t c = 0; c < ids_.size(); ++c) alpha[static_cast<Eigen::Index>(ids_[c])] = sigma * modes_[c];
        return alpha;
    }

private:
    std::size_t n_clusters_;
    GaussHermite rule_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> ids_;
    std::vector<double> modes_;
};

double logistic_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& eta) {
    const Eigen::VectorXd lp = x * eta;
    double s = 0.0;
    for (Eigen::Index r = 0; r < lp.size(); ++r) s += y[r] * lp[r] - log1pexp(lp[r]);
    return s;
}

}  // namespace

GaussHermite gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussHermite out;
    for (int k = 0; k < n; ++k) {
        out.nodes.push_back(eig.eigenvalues()[k]);
        const double v = eig.eigenvectors()(0, k);
        out.weights.push_back(std::sqrt(std::numbers::pi) * v * v);
    }
    if (n % 2 == 1) out.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return out;
}

GlmmFit fit_logistic(std::span<const int> responses, const Eigen::MatrixXd& design, const GlmmOptions& options) {
    const auto n = design.rows();
    const auto q = design.cols();
    if (static_cast<std::size_t>(n) != responses.size()) throw std::invalid_argument("response length differs from design rows");
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) y[r] = responses[static_cast<std::size_t>(r)];

    GlmmFit fit;
    fit.eta = Eigen::VectorXd::Zero(q);
    double ll = logistic_loglik(y, design, fit.eta);
    for (int it = 1; it <= 100; ++it) {
        const Eigen::VectorXd lp = design * fit.eta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            p[r] = expit(lp[r]);
            w[r] = p[r] * (1.0 - p[r]);
        }
        const Eigen::VectorXd score = design.transpose() * (y - p);
        const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            fit.separated = true;
            break;
        }
        Eigen::VectorXd step = ldlt.solve(score);
        if (!step.allFinite()) {
            fit.separated = true;
            break;
        }
        Eigen::VectorXd next = fit.eta + step;
        double ll_next = logistic_loglik(y, design, next);
        for (int h = 0; h < 30 && ll_next < ll - 1e-12; ++h) {
            step *= 0.5;
            next = fit.eta + step;
            ll_next = logistic_loglik(y, design, next);
        }
        fit.eta = next;
        fit.n_iterations = it;
        const double change = std::fabs(ll_next - ll);
        ll = ll_next;
        if (separated(fit.eta, options.separation_bound)) {
            fit.separated = true;
            break;
        }
        if (step.cwiseAbs().maxCoeff() < 1e-10 || change < 1e-13 * (1.0 + std::fabs(ll))) {
            fit.converged = true;
            break;
        }
    }
    if (fit.separated) fit.converged = false;
    fit.loglik = ll;
    fit.sigma2_alpha = 0.0;
    return fit;
}

double glmm_loglik(std::span<const int> responses, const Eigen::MatrixXd& design, std::span<const int> cluster,
                   std::size_t n_clusters, const Eigen::VectorXd& eta, double log_sigma2, int quadrature_nodes) {
    RandomInterceptProblem problem(responses, design, cluster, n_clusters, quadrature_nodes);
    Eigen::VectorXd theta(eta.size() + 1);
    theta << eta, log_sigma2;
    return problem.loglik(theta, nullptr);
}

GlmmFit fit_logistic_glmm(std::span<const int> responses, const Eigen::MatrixXd& design,
                          std::span<const int> cluster, std::size_t n_clusters, const GlmmOptions& options) {
    if (responses.size() != static_cast<std::size_t>(design.rows()) || cluster.size() != responses.size())
        throw std::invalid_argument("fit_logistic_glmm: input lengths differ");

    GlmmFit start = fit_logistic(responses, design, options);
    if (!options.random_intercept || start.separated) {
        start.alpha_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_clusters));
        return start;
    }

    const auto q = design.cols();
    int nodes = options.quadrature_nodes;
    Eigen::VectorXd theta(q + 1);
    theta << start.eta, std::log(0.25);

    auto run = [&](int k_nodes, GlmmFit& fit) {
        RandomInterceptProblem problem(responses, design, cluster, n_clusters, k_nodes);
        Eigen::VectorXd grad;
        double ll = problem.loglik(theta, &grad);
        if (!std::isfinite(ll) || !grad.allFinite()) return false;

        // Inverse-Hessian seed: logistic information for eta, O(1/C) for log sigma^2.
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q + 1, q + 1);
        {
            const Eigen::VectorXd lp = design * start.eta;
            Eigen::VectorXd w(lp.size());
            for (Eigen::Index r = 0; r < lp.size(); ++r) {
                const double p = expit(lp[r]);
                w[r] = std::max(p * (1.0 - p), 1e-8);
            }
            const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
            h.topLeftCorner(q, q) = info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
            h(q, q) = 4.0 / static_cast<double>(std::max<std::size_t>(n_clusters, 1));
        }

        fit.converged = false;
        for (int it = 1; it <= options.max_iterations; ++it) {
            fit.n_iterations = it;
            // maximize ll: ascend along H grad
            Eigen::VectorXd dir = h * grad;
            double slope = grad.dot(dir);
            if (!(slope > 0.0)) {
                h = Eigen::MatrixXd::Identity(q + 1, q + 1) * 1e-3;
                dir = h * grad;
                slope = grad.dot(dir);
            }
            // cap the log-variance move so the line search stays in range
            const double max_move = std::fabs(dir[q]);
            double t = max_move > 3.0 ? 3.0 / max_move : 1.0;
            Eigen::VectorXd next, grad_next;
            double ll_next = -std::numeric_limits<double>::infinity();
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                next = theta + t * dir;
                ll_next = problem.loglik(next, &grad_next);
                if (std::isfinite(ll_next) && ll_next >= ll + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            const double gnorm = grad.cwiseAbs().maxCoeff();
            if (!accepted) {
                fit.converged = gnorm < 1e-3;
                break;
            }
            const Eigen::VectorXd s = next - theta;
            const Eigen::VectorXd yv = grad - grad_next;  // gradient of the negative log-likelihood changes by -yv
            const double change = ll_next - ll;
            theta = next;
            ll = ll_next;
            grad = grad_next;
            const double sy = s.dot(yv);
            if (sy > 1e-12) {
                const double rho = 1.0 / sy;
                const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(q + 1, q + 1);
                h = (id - rho * s * yv.transpose()) * h * (id - rho * yv * s.transpose()) + rho * s * s.transpose();
            }
            if (separated(theta.head(q), options.separation_bound)) {
                fit.separated = true;
                break;
            }
            if (theta[q] < options.boundary_log_variance) break;
            const double gnext = grad.cwiseAbs().maxCoeff();
            if (gnext < 1e-6 || (std::fabs(change) < options.tolerance && gnext < 1e-4)) {
                fit.converged = true;
                break;
            }
        }
        fit.loglik = ll;
        fit.eta = theta.head(q);
        fit.quadrature_nodes = k_nodes;
        if (!fit.separated && theta[q] >= options.boundary_log_variance) {
            fit.sigma2_alpha = std::exp(theta[q]);
            fit.alpha_hat = problem.eblups(theta);
        }
        return true;
    };

    GlmmFit fit;
    if (!run(nodes, fit)) {
        theta << start.eta, std::log(0.25);
        nodes = 1;
        fit = GlmmFit{};
        if (!run(nodes, fit)) {
            fit.converged = false;
            fit.eta = start.eta;
            fit.alpha_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_clusters));
            return fit;
        }
    }
    if (fit.separated) {
        fit.converged = false;
        fit.alpha_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_clusters));
        return fit;
    }
    if (theta[q] < options.boundary_log_variance) {
        GlmmFit plain = start;
        plain.boundary = true;
        plain.sigma2_alpha = 0.0;
        plain.alpha_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_clusters));
        plain.n_iterations = fit.n_iterations;
        return plain;
    }
    return fit;
}

double predict_prob(const GlmmFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& row, std::optional<int> cluster) {
    if (row.size() != fit.eta.size()) throw std::invalid_argument("predict_prob: design row dimension mismatch");
    double lp = row.dot(fit.eta);
    if (cluster && *cluster >= 0 && *cluster < fit.alpha_hat.size()) lp += fit.alpha_hat[*cluster];
    return expit(lp);
}

}  // namespace crt
