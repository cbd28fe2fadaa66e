#ifndef CRT_WFHS_HPP
#define CRT_WFHS_HPP

#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crt/analysis.hpp"
#include "crt/harness.hpp"

namespace crt {

/// Replication protocol on a trial with a fully observed modifier.
///   0: no missingness (diagnostic)
///   1: MCAR, P(R = 1) = 0.8
///   2: logit P(R = 1) = 2 + 0.5 A - 0.6 C4 - 0.3 A4
///   3: scenario 2 + 0.05 A C4 - 0.15 A A4 + 0.1 A C4 A4 + zeta_site, latent ICC 0.1
struct WfhsConfig {
    int scenario = 1;
    int replications = 500;
    std::uint64_t seed_base = 1000;
    int threads = 1;
    std::string control_column = "control";
    std::string autonomy_column = "autonomy";
    double threshold = 4.0;
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    AnalysisOptions analysis{};
};

/// Keeps the two mapped covariates, dichotomized at >= threshold, as C4 and
/// A4. Throws std::invalid_argument if a column is absent or any modifier
/// value is missing.
TrialData prepare_wfhs(const TrialData& raw, const WfhsConfig& config);

/// Presence mask for one replication. Expects prepared data (C4, A4).
std::vector<std::uint8_t> impose_missingness(const TrialData& prepared, int scenario, RngStream& rng);

struct WfhsSummaryRow {
    std::string method;  // "Complete" for the reference analysis
    Estimand estimand = Estimand::HTE;
    int n_used = 0;
    int n_dropped = 0;
    double mean_estimate = 0.0;
    double sd_estimate = 0.0;
    double mean_ci_low = 0.0;
    double mean_ci_high = 0.0;
    double pct_narrower = 0.0;        // CI narrower than the complete-data CI
    double pct_cover_complete = 0.0;  // CI contains the complete-data CI
};

struct WfhsResult {
    std::vector<IterationRecord> records;
    std::vector<FailureEntry> failures;
    MethodResult complete;
    std::vector<double> missing_fraction;  // per replication
    std::vector<WfhsSummaryRow> summary;
};

WfhsResult wfhs_replicate(const TrialData& prepared, const WfhsConfig& config);

std::vector<WfhsSummaryRow> summarize_wfhs(std::span<const IterationRecord> records,
                                           std::span<const FailureEntry> failures, const MethodResult& complete,
                                           std::span<const Method> methods);

void write_wfhs_summary(std::span<const WfhsSummaryRow> rows, const std::string& path);

/// Synthetic stand-in with the extract's shape: 30 sites of 30-89
/// employees, 15 treated, binary employee type, continuous outcome and two
/// 1-5 ordinal covariates named control and autonomy.
TrialData make_wfhs_standin(std::uint64_t seed);

}  // namespace crt

#endif  // CRT_WFHS_HPP
