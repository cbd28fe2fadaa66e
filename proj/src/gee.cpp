#include "crt/gee.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crt {
namespace {

// V_i^{-1} for an exchangeable block of size n is
// a (I - c 11'), a = 1/(phi (1 - rho)), c = rho / (1 + (n - 1) rho).
struct BlockInverse {
    double a;
    double c;
};

BlockInverse block_inverse(const WorkingCorrelation& w, std::size_t n) {
    if (w.kind == CorrelationKind::Independence) return {1.0 / w.dispersion, 0.0};
    const double rho = w.rho;
    return {1.0 / (w.dispersion * (1.0 - rho)), rho / (1.0 + (static_cast<double>(n) - 1.0) * rho)};
}

template <typename Fn>
void for_each_cluster(const ClusteredDesign& d, Fn&& fn) {
    for (std::size_t i = 0; i + 1 < d.offsets.size(); ++i) {
        const auto lo = static_cast<Eigen::Index>(d.offsets[i]);
        const auto n = static_cast<Eigen::Index>(d.offsets[i + 1] - d.offsets[i]);
        fn(i, lo, n);
    }
}

struct Moments {
    Eigen::MatrixXd xtvx;
    Eigen::VectorXd xtvy;
};

Moments weighted_moments(const ClusteredDesign& d, const WorkingCorrelation& w) {
    const auto q = d.x.cols();
    Moments m{Eigen::MatrixXd::Zero(q, q), Eigen::VectorXd::Zero(q)};
    for_each_cluster(d, [&](std::size_t, Eigen::Index lo, Eigen::Index n) {
        const auto xi = d.x.middleRows(lo, n);
        const auto yi = d.y.segment(lo, n);
        const BlockInverse inv = block_inverse(w, static_cast<std::size_t>(n));
        const Eigen::VectorXd s = xi.colwise().sum().transpose();
        m.xtvx.noalias() += inv.a * (xi.transpose() * xi);
        m.xtvy.noalias() += inv.a * (xi.transpose() * yi);
        if (inv.c != 0.0) {
            m.xtvx.noalias() -= (inv.a * inv.c) * (s * s.transpose());
            m.xtvy.noalias() -= (inv.a * inv.c * yi.sum()) * s;
        }
    });
    return m;
}

// Moment updates for dispersion and exchangeable correlation from raw residuals.
void update_working(const ClusteredDesign& d, const Eigen::VectorXd& resid, WorkingCorrelation& w) {
    const double n_total = static_cast<double>(d.y.size());
    const double q = static_cast<double>(d.x.cols());
    const double denom = std::max(n_total - q, 1.0);
    w.dispersion = resid.squaredNorm() / denom;
    if (!(w.dispersion > 0.0)) w.dispersion = 1.0;
    if (w.kind == CorrelationKind::Independence) return;

    double cross = 0.0;
    double pairs = 0.0;
    std::size_t max_n = 1;
    for_each_cluster(d, [&](std::size_t, Eigen::Index lo, Eigen::Index n) {
        const auto ri = resid.segment(lo, n);
        const double sum = ri.sum();
        cross += 0.5 * (sum * sum - ri.squaredNorm());
        pairs += 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
        max_n = std::max(max_n, static_cast<std::size_t>(n));
    });
    double rho = pairs > 0.0 ? cross / (pairs * w.dispersion) : 0.0;
    const double lower = max_n > 1 ? -1.0 / (static_cast<double>(max_n) - 1.0) : -1.0;
    constexpr double margin = 1e-6;
    w.rho_truncated = false;
    if (rho <= lower + margin) {
        rho = lower + margin;
        w.rho_truncated = true;
    } else if (rho >= 1.0 - margin) {
        rho = 1.0 - margin;
        w.rho_truncated = true;
    }
    w.rho = rho;
}

Eigen::VectorXd solve_checked(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * scale)
        throw std::runtime_error("design matrix is rank deficient");
    return ldlt.solve(b);
}

Eigen::MatrixXd invert_checked(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * scale)
        throw std::runtime_error(what);
    return ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

ClusteredDesign clustered_design(const DesignMatrix& design, std::span<const double> outcome,
                                 std::span<const std::size_t> offsets,
                                 std::optional<std::span<const std::uint8_t>> weights) {
    const auto n = static_cast<std::size_t>(design.values.rows());
    if (outcome.size() != n || offsets.empty() || offsets.back() != n)
        throw std::invalid_argument("design, outcome and cluster offsets disagree");
    if (weights && weights->size() != n) throw std::invalid_argument("weight length differs from N");

    ClusteredDesign out;
    out.labels = design.column_labels;
    if (!weights) {
        out.x = design.values;
        out.y = Eigen::Map<const Eigen::VectorXd>(outcome.data(), static_cast<Eigen::Index>(n));
        out.offsets.assign(offsets.begin(), offsets.end());
        return out;
    }
    const auto kept = std::count_if(weights->begin(), weights->end(), [](std::uint8_t w) { return w != 0; });
    out.x.resize(kept, design.values.cols());
    out.y.resize(kept);
    out.offsets.push_back(0);
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) {
            if (!(*weights)[r]) continue;
            out.x.row(pos) = design.values.row(static_cast<Eigen::Index>(r));
            out.y[pos] = outcome[r];
            ++pos;
        }
        if (static_cast<std::size_t>(pos) != out.offsets.back()) out.offsets.push_back(static_cast<std::size_t>(pos));
    }
    return out;
}

Eigen::MatrixXd gee_bread(const ClusteredDesign& design, const WorkingCorrelation& working) {
    return weighted_moments(design, working).xtvx;
}

Eigen::MatrixXd gee_cluster_scores(const ClusteredDesign& d, const Eigen::VectorXd& gamma,
                                   const WorkingCorrelation& w) {
    const Eigen::VectorXd resid = d.y - d.x * gamma;
    Eigen::MatrixXd scores(d.x.cols(), static_cast<Eigen::Index>(d.offsets.size() - 1));
    for_each_cluster(d, [&](std::size_t i, Eigen::Index lo, Eigen::Index n) {
        const auto xi = d.x.middleRows(lo, n);
        const auto ri = resid.segment(lo, n);
        const BlockInverse inv = block_inverse(w, static_cast<std::size_t>(n));
        Eigen::VectorXd u = inv.a * (xi.transpose() * ri);
        if (inv.c != 0.0) u -= (inv.a * inv.c * ri.sum()) * xi.colwise().sum().transpose();
        scores.col(static_cast<Eigen::Index>(i)) = u;
    });
    return scores;
}

Eigen::MatrixXd sandwich_cov(const ClusteredDesign& design, const Eigen::VectorXd& gamma,
                             const WorkingCorrelation& working) {
    const Eigen::MatrixXd delta = invert_checked(gee_bread(design, working), "singular bread matrix");
    const Eigen::MatrixXd scores = gee_cluster_scores(design, gamma, working);
    const Eigen::MatrixXd meat = scores * scores.transpose();
    return symmetrize(delta * meat * delta);
}

double estimating_equation_norm(const ClusteredDesign& design, const Eigen::VectorXd& gamma,
                                const WorkingCorrelation& working) {
    return gee_cluster_scores(design, gamma, working).rowwise().sum().norm();
}

GeeFit fit_gee(const ClusteredDesign& d, const GeeOptions& options) {
    const auto q = d.x.cols();
    if (d.offsets.size() < 2) throw std::runtime_error("no clusters with usable rows");
    if (d.x.rows() < q) throw std::runtime_error("design matrix is rank deficient");

    GeeFit fit;
    fit.labels = d.labels;
    fit.n_used = static_cast<std::size_t>(d.x.rows());
    fit.n_clusters_used = d.offsets.size() - 1;

    // Independence start: ordinary least squares.
    WorkingCorrelation w;
    w.kind = CorrelationKind::Independence;
    {
        const Moments m = weighted_moments(d, w);
        fit.gamma = solve_checked(m.xtvx, m.xtvy);
    }
    w.kind = options.kind;

    Eigen::VectorXd resid = d.y - d.x * fit.gamma;
    for (int it = 1; it <= options.max_iterations; ++it) {
        update_working(d, resid, w);
        const Moments m = weighted_moments(d, w);
        const Eigen::VectorXd next = solve_checked(m.xtvx, m.xtvy);
        const double change = (next - fit.gamma).cwiseAbs().maxCoeff();
        fit.gamma = next;
        fit.n_iterations = it;
        resid = d.y - d.x * fit.gamma;
        if (change < options.tolerance) {
            fit.converged = true;
            break;
        }
    }
    fit.working = w;
    const Eigen::MatrixXd bread = gee_bread(d, w);
    fit.model_cov = symmetrize(invert_checked(bread, "singular bread matrix"));
    fit.robust_cov = sandwich_cov(d, fit.gamma, w);
    return fit;
}

GeeFit fit_gee(const TrialData& data, const Formula& formula, const GeeOptions& options,
               std::optional<std::span<const std::uint8_t>> weights,
               std::optional<std::span<const int>> imputed_modifier) {
    // Complete-case rows never need an imputed value; fill the gaps with 0 so
    // the design can be built, then drop those rows through the weights.
    std::vector<int> filler;
    if (weights && !imputed_modifier && formula.uses(Variable::Modifier) && !data.fully_observed()) {
        for (std::size_t r = 0; r < data.n_total(); ++r) {
            if ((*weights)[r] && !data.observed[r])
                throw std::invalid_argument("weighted row has a missing modifier");
        }
        filler.assign(data.n_total(), 0);
        imputed_modifier = std::span<const int>(filler);
    }
    const DesignMatrix design = build_design(formula, data, imputed_modifier);
    return fit_gee(clustered_design(design, data.outcome, data.offsets, weights), options);
}

}  // namespace crt
