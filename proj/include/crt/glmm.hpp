#ifndef CRT_GLMM_HPP
#define CRT_GLMM_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace crt {

struct GlmmOptions {
    bool random_intercept = true;
    int quadrature_nodes = 15;   // adaptive Gauss-Hermite; 1 = Laplace
    int max_iterations = 200;
    double tolerance = 1e-8;     // |change in log-likelihood|
    double separation_bound = 30.0;
    double boundary_log_variance = -10.0;
};

/// Logistic model logit P(M = 1) = w'eta + alpha_i, alpha_i ~ N(0, sigma2_alpha).
struct GlmmFit {
    Eigen::VectorXd eta;
    double sigma2_alpha = 0.0;
    Eigen::VectorXd alpha_hat;   // per-cluster EBLUP (posterior mode); 0 for clusters without data
    double loglik = 0.0;
    bool converged = false;
    bool separated = false;
    bool boundary = false;       // variance estimate collapsed to 0
    int n_iterations = 0;
    int quadrature_nodes = 0;    // nodes actually used (0 for plain logistic)
};

/// Gauss-Hermite rule for weight exp(-x^2) (Golub-Welsch).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussHermite gauss_hermite(int n);

/// Fits the random-intercept logistic model on the complete cases.
/// `cluster` gives each row's cluster in 0..n_clusters-1. Separation
/// (|eta_k| > bound) returns converged = false; a variance estimate at the
/// boundary returns the plain logistic fit with zero EBLUPs.
GlmmFit fit_logistic_glmm(std::span<const int> responses, const Eigen::MatrixXd& design,
                          std::span<const int> cluster, std::size_t n_clusters, const GlmmOptions& options = {});

/// Plain logistic regression by Newton-Raphson.
GlmmFit fit_logistic(std::span<const int> responses, const Eigen::MatrixXd& design,
                     const GlmmOptions& options = {});

/// Adaptive-quadrature marginal log-likelihood at (eta, log sigma^2).
double glmm_loglik(std::span<const int> responses, const Eigen::MatrixXd& design, std::span<const int> cluster,
                   std::size_t n_clusters, const Eigen::VectorXd& eta, double log_sigma2, int quadrature_nodes);

/// expit(w'eta + alpha_i) when `cluster` is supplied, expit(w'eta) otherwise.
double predict_prob(const GlmmFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                    std::optional<int> cluster = std::nullopt);

}  // namespace crt

#endif  // CRT_GLMM_HPP
