#ifndef CRT_DGM_HPP
#define CRT_DGM_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crt/data.hpp"
#include "crt/rng.hpp"

namespace crt {

inline constexpr double kNonNullBeta3 = -1.6065306597126334;  // -(1 + exp(-0.5))

/// E(M) for logit P(M = 1) = 0.5 + alpha, alpha ~ N(0, latent_icc_to_variance(0.1)),
/// by adaptive quadrature. `modifier_prevalence_mc` reproduces it by simulation.
inline constexpr double kModifierPrevalence = 0.6133766250404775;

struct ScenarioConfig {
    int scenario = 1;                // 1 or 2
    std::size_t clusters = 100;      // even
    double beta3 = 0.0;
    double mean_cluster_size = 50.0;
    double modifier_icc = 0.1;
    double outcome_icc = 0.1;
    double missing_icc = 0.1;        // scenario 2 only
    double residual_var = 3.0;
    bool mask = true;                // false: diagnostic run without missingness
};

/// Throws std::invalid_argument for an unusable configuration.
void check_config(const ScenarioConfig& config);

struct GeneratedTrial {
    TrialData data;                  // modifier masked by R
    std::vector<int> full_modifier;  // M-dagger before masking
    double missing_fraction = 0.0;
    double prevalence = 0.0;         // mean of M-dagger
};

/// sigma^2 with sigma^2 / (sigma^2 + pi^2/3) = icc.
double latent_icc_to_variance(double icc);
/// sigma_kappa^2 = icc * residual_var / (1 - icc).
double outcome_icc_to_variance(double icc, double residual_var);

/// Draw order: cluster sizes; treatment permutation; per cluster alpha,
/// then per individual M-dagger; covariates row by row; kappa per cluster;
/// epsilon per individual; zeta per cluster (scenario 2); R per individual.
GeneratedTrial generate(const ScenarioConfig& config, RngStream& rng);

/// Mean of the outcome model at the generating coefficients (no kappa, epsilon).
double outcome_mean(const ScenarioConfig& config, int a, int m, std::span<const double> x);

struct TrueEstimands {
    double gamma3 = 0.0;
    double ate = 0.0;
    double e_m = 0.0;
};

TrueEstimands true_estimands(const ScenarioConfig& config);

/// Monte Carlo estimate of E(M-dagger) from `draws` samples.
double modifier_prevalence_mc(std::size_t draws, std::uint64_t seed, double modifier_icc = 0.1);

/// One-way ANOVA intracluster correlation of `values` grouped by `offsets`
/// (unbalanced-size n0 correction).
double anova_icc(std::span<const double> values, std::span<const std::size_t> offsets);

}  // namespace crt

#endif  // CRT_DGM_HPP
