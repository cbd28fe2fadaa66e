#ifndef CRT_GEE_HPP
#define CRT_GEE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crt/data.hpp"

namespace crt {

enum class CorrelationKind { Independence, Exchangeable };

struct WorkingCorrelation {
    CorrelationKind kind = CorrelationKind::Exchangeable;
    double rho = 0.0;
    double dispersion = 1.0;
    bool rho_truncated = false;
};

/// Identity is the only link implemented; the enum is the extension point.
enum class Link { Identity };

struct GeeOptions {
    CorrelationKind kind = CorrelationKind::Exchangeable;
    Link link = Link::Identity;
    double tolerance = 1e-8;
    int max_iterations = 100;
};

struct GeeFit {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd robust_cov;
    Eigen::MatrixXd model_cov;  // bread inverse, Delta-hat
    WorkingCorrelation working;
    std::vector<std::string> labels;
    int n_iterations = 0;
    bool converged = false;
    std::size_t n_used = 0;          // individuals with weight 1
    std::size_t n_clusters_used = 0; // clusters with at least one such individual

    double robust_se(Eigen::Index k) const { return std::sqrt(robust_cov(k, k)); }
};

/// Cluster blocks of a (possibly row-subsetted) design. `offsets` indexes the
/// rows of X / y exactly like TrialData::offsets.
struct ClusteredDesign {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::size_t> offsets;
    std::vector<std::string> labels;
};

/// Drops rows whose weight is 0; clusters left empty are removed.
ClusteredDesign clustered_design(const DesignMatrix& design, std::span<const double> outcome,
                                 std::span<const std::size_t> offsets,
                                 std::optional<std::span<const std::uint8_t>> weights = std::nullopt);

/// Solves the GEE estimating equations for a linear mean model.
/// Throws std::runtime_error on rank deficiency; non-convergence is reported
/// through GeeFit::converged.
GeeFit fit_gee(const ClusteredDesign& design, const GeeOptions& options = {});

/// Convenience: outcome model `formula` on `data`, with missing modifiers
/// resolved from `imputed_modifier` and optional 0/1 observation weights
/// (complete-case analysis passes data.observed).
GeeFit fit_gee(const TrialData& data, const Formula& formula, const GeeOptions& options,
               std::optional<std::span<const std::uint8_t>> weights = std::nullopt,
               std::optional<std::span<const int>> imputed_modifier = std::nullopt);

/// Sum over clusters of X_i' V_i^{-1} X_i (the bread before inversion).
Eigen::MatrixXd gee_bread(const ClusteredDesign& design, const WorkingCorrelation& working);

/// Per-cluster scores X_i' V_i^{-1} r_i stacked as columns (q x C).
Eigen::MatrixXd gee_cluster_scores(const ClusteredDesign& design, const Eigen::VectorXd& gamma,
                                   const WorkingCorrelation& working);

/// Robust covariance Delta (sum_i U_i U_i') Delta at gamma, Delta = bread^{-1}.
/// Throws std::runtime_error on a singular bread.
Eigen::MatrixXd sandwich_cov(const ClusteredDesign& design, const Eigen::VectorXd& gamma,
                             const WorkingCorrelation& working);

/// Norm of sum_i X_i' V_i^{-1} (y_i - X_i gamma).
double estimating_equation_norm(const ClusteredDesign& design, const Eigen::VectorXd& gamma,
                                const WorkingCorrelation& working);

}  // namespace crt

#endif  // CRT_GEE_HPP
