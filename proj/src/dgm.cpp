#include "crt/dgm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace crt {

void check_config(const ScenarioConfig& c) {
    if (c.scenario != 1 && c.scenario != 2) throw std::invalid_argument("scenario must be 1 or 2");
    if (c.clusters < 2 || c.clusters % 2 != 0) throw std::invalid_argument("cluster count must be even and >= 2");
    if (!(c.mean_cluster_size > 0.0)) throw std::invalid_argument("mean cluster size must be positive");
    for (double icc : {c.modifier_icc, c.outcome_icc, c.missing_icc})
        if (!(icc >= 0.0 && icc < 1.0)) throw std::invalid_argument("ICC must lie in [0, 1)");
    if (!(c.residual_var > 0.0)) throw std::invalid_argument("residual variance must be positive");
}

double latent_icc_to_variance(double icc) {
    if (!(icc >= 0.0 && icc < 1.0)) throw std::invalid_argument("ICC must lie in [0, 1)");
    return icc / (1.0 - icc) * std::numbers::pi * std::numbers::pi / 3.0;
}

double outcome_icc_to_variance(double icc, double residual_var) {
    if (!(icc >= 0.0 && icc < 1.0)) throw std::invalid_argument("ICC must lie in [0, 1)");
    return icc * residual_var / (1.0 - icc);
}

double outcome_mean(const ScenarioConfig& c, int a, int m, std::span<const double> x) {
    const double am = a * m;
    double y = 1.0 + a + 0.75 * m + c.beta3 * am + 0.8 * x[0] * a - 0.4 * x[0] * m + 0.7 * x[0] * am;
    if (c.scenario == 2) y += 0.9 * x[1] * am - 1.1 * x[2] * am;
    return y;
}

GeneratedTrial generate(const ScenarioConfig& c, RngStream& rng) {
    check_config(c);
    const std::size_t C = c.clusters;
    const std::size_t p = c.scenario == 1 ? 1 : 3;

    std::vector<std::size_t> offsets(C + 1, 0);
    for (std::size_t i = 0; i < C; ++i) {
        int n = rng.poisson(c.mean_cluster_size);
        while (n < 2) n = rng.poisson(c.mean_cluster_size);
        offsets[i + 1] = offsets[i] + static_cast<std::size_t>(n);
    }
    const std::size_t N = offsets[C];

    std::vector<int> arm(C, 0);
    for (std::size_t i = 0; i < C / 2; ++i) arm[i] = 1;
    for (std::size_t i = C - 1; i > 0; --i) std::swap(arm[i], arm[rng.below(i + 1)]);

    const double var_alpha = latent_icc_to_variance(c.modifier_icc);
    std::vector<int> full(N);
    for (std::size_t i = 0; i < C; ++i) {
        const double alpha = rng.normal(0.0, var_alpha);
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) full[r] = rng.bernoulli(expit(0.5 + alpha));
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(p));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index k = 0; k < x.cols(); ++k) x(r, k) = rng.std_normal();

    const double var_kappa = outcome_icc_to_variance(c.outcome_icc, c.residual_var);
    std::vector<double> kappa(C);
    for (double& k : kappa) k = rng.normal(0.0, var_kappa);

    GeneratedTrial out;
    TrialData& d = out.data;
    d.offsets = offsets;
    d.cluster_label.resize(C);
    d.cluster_index.resize(N);
    d.treatment.resize(N);
    d.outcome.resize(N);
    for (std::size_t i = 0; i < C; ++i) {
        d.cluster_label[i] = static_cast<int>(i + 1);
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) {
            d.cluster_index[r] = static_cast<int>(i);
            d.treatment[r] = arm[i];
            const double xr[3] = {x(static_cast<Eigen::Index>(r), 0), p > 1 ? x(static_cast<Eigen::Index>(r), 1) : 0.0,
                                  p > 2 ? x(static_cast<Eigen::Index>(r), 2) : 0.0};
            d.outcome[r] = outcome_mean(c, arm[i], full[r], xr) + kappa[i] + rng.normal(0.0, c.residual_var);
        }
    }

    std::vector<double> zeta(C, 0.0);
    if (c.scenario == 2) {
        const double var_zeta = latent_icc_to_variance(c.missing_icc);
        for (double& z : zeta) z = rng.normal(0.0, var_zeta);
    }

    d.modifier = full;
    d.observed.assign(N, 1);
    std::size_t missing = 0;
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) {
            const auto rr = static_cast<Eigen::Index>(r);
            double logit;
            if (c.scenario == 1)
                logit = 1.2 + 0.5 * x(rr, 0) - 0.2 * d.outcome[r];
            else
                logit = 1.5 + 0.6 * x(rr, 0) + 1.2 * x(rr, 1) - 0.8 * x(rr, 2) - 0.2 * d.outcome[r] + zeta[i];
            const int observed = rng.bernoulli(expit(logit));
            if (c.mask && !observed) {
                d.observed[r] = 0;
                d.modifier[r] = 0;
                ++missing;
            }
        }
    }
    d.covariates = std::move(x);
    for (std::size_t k = 0; k < p; ++k) d.covariate_names.push_back("x" + std::to_string(k + 1));

    double ones = 0.0;
    for (int m : full) ones += m;
    out.full_modifier = std::move(full);
    out.missing_fraction = static_cast<double>(missing) / static_cast<double>(N);
    out.prevalence = ones / static_cast<double>(N);
    return out;
}

TrueEstimands true_estimands(const ScenarioConfig& c) {
    TrueEstimands t;
    t.gamma3 = c.beta3;
    t.e_m = kModifierPrevalence;
    if (c.modifier_icc != 0.1) t.e_m = modifier_prevalence_mc(10'000'000, 20240101, c.modifier_icc);
    t.ate = 1.0 + c.beta3 * t.e_m;
    return t;
}

double modifier_prevalence_mc(std::size_t draws, std::uint64_t seed, double modifier_icc) {
    if (draws == 0) throw std::invalid_argument("need at least one draw");
    RngStream rng(seed);
    const double sd = std::sqrt(latent_icc_to_variance(modifier_icc));
    double sum = 0.0;
    for (std::size_t k = 0; k < draws; ++k) sum += expit(0.5 + sd * rng.std_normal());
    return sum / static_cast<double>(draws);
}

double anova_icc(std::span<const double> values, std::span<const std::size_t> offsets) {
    const std::size_t C = offsets.size() - 1;
    const double N = static_cast<double>(offsets[C]);
    if (C < 2 || offsets[C] <= C) throw std::invalid_argument("anova_icc needs at least two clusters and N > C");
    double grand = 0.0;
    for (std::size_t r = 0; r < offsets[C]; ++r) grand += values[r];
    grand /= N;
    double ssb = 0.0, ssw = 0.0, sum_n2 = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
        const double n = static_cast<double>(offsets[i + 1] - offsets[i]);
        double mean = 0.0;
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) mean += values[r];
        mean /= n;
        for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) ssw += (values[r] - mean) * (values[r] - mean);
        ssb += n * (mean - grand) * (mean - grand);
        sum_n2 += n * n;
    }
    const double msb = ssb / static_cast<double>(C - 1);
    const double msw = ssw / (N - static_cast<double>(C));
    const double n0 = (N - sum_n2 / N) / static_cast<double>(C - 1);
    const double between = (msb - msw) / n0;
    return between / (between + msw);
}

}  // namespace crt
