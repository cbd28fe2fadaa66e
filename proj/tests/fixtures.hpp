#ifndef CRT_TEST_FIXTURES_HPP
#define CRT_TEST_FIXTURES_HPP

#include <optional>
#include <vector>

#include "crt/data.hpp"
#include "crt/rng.hpp"

namespace fixture {

// Three clusters of sizes 3, 4, 2 with one covariate; modifier fully observed.
inline crt::TrialData toy_trial() {
    crt::TrialRows rows;
    rows.cluster_id = {1, 1, 1, 2, 2, 2, 2, 3, 3};
    rows.treatment = {1, 1, 1, 0, 0, 0, 0, 1, 1};
    rows.outcome = {2.1, 3.4, 1.9, 0.4, 1.7, -0.3, 0.9, 3.8, 2.2};
    rows.modifier = {1, 0, 1, 1, 0, 0, 1, 0, 1};
    rows.covariates.resize(9, 1);
    rows.covariates << 0.3, -1.2, 0.8, 1.5, -0.4, 0.1, -2.0, 0.6, 1.1;
    return crt::make_trial(rows);
}

// Random trial with `clusters` clusters of `size` individuals, p covariates,
// modifier prevalence ~ expit(0.5 + alpha) and outcomes from the
// [1, A, M, A:M] model plus a cluster effect. A fraction of modifiers is
// masked completely at random.
inline crt::TrialData random_trial(std::size_t clusters, std::size_t size, std::size_t p, double missing,
                                   std::uint64_t seed) {
    crt::RngStream rng(seed);
    crt::TrialRows rows;
    rows.covariates.resize(static_cast<Eigen::Index>(clusters * size), static_cast<Eigen::Index>(p));
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < clusters; ++i) {
        const int a = static_cast<int>(i % 2);
        const double u = rng.normal(0.0, 0.4), k = rng.normal(0.0, 0.3);
        for (std::size_t j = 0; j < size; ++j) {
            double xsum = 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                rows.covariates(pos, static_cast<Eigen::Index>(c)) = rng.std_normal();
                xsum += rows.covariates(pos, static_cast<Eigen::Index>(c));
            }
            const int m = rng.bernoulli(crt::expit(0.5 + u + 0.3 * xsum));
            rows.cluster_id.push_back(static_cast<int>(i + 1));
            rows.treatment.push_back(a);
            rows.outcome.push_back(1.0 + a + 0.75 * m - 0.5 * a * m + 0.4 * xsum + k + rng.normal(0.0, 1.0));
            if (rng.uniform() < missing) rows.modifier.emplace_back(std::nullopt);
            else rows.modifier.emplace_back(m);
            ++pos;
        }
    }
    return crt::make_trial(rows);
}

}  // namespace fixture

#endif  // CRT_TEST_FIXTURES_HPP
