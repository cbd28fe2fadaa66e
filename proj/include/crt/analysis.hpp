#ifndef CRT_ANALYSIS_HPP
#define CRT_ANALYSIS_HPP

#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "crt/bmmi.hpp"
#include "crt/data.hpp"
#include "crt/gee.hpp"
#include "crt/impute.hpp"
#include "crt/pool.hpp"
#include "crt/rng.hpp"

namespace crt {

enum class Method { CCA, SI, MI, MMI, BMMI };

inline constexpr Method kAllMethods[] = {Method::CCA, Method::SI, Method::MI, Method::MMI, Method::BMMI};

/// Tokens cca, si, mi, mmi, bmmi (lower case) and display names CCA, SI, ...
std::string_view method_token(Method m);
std::string_view method_name(Method m);
Method parse_method(std::string_view token);

enum class Estimand { HTE, ATE };
std::string_view estimand_name(Estimand e);

struct PointEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// gamma_1 + gamma_3 * mean_m with delta-method SE along (0, 1, 0, mean_m).
/// Requires the fit to come from the [1, A, M, A:M] outcome model.
PointEstimate ate_estimate(const GeeFit& fit, double mean_m);

/// Robust SE of gamma_1 after refitting with M replaced by M - mean(M) over
/// the rows that enter the fit. Agrees with ate_estimate.
PointEstimate centered_ate(const TrialData& data, std::span<const int> modifier, const GeeOptions& options,
                           std::optional<std::span<const std::uint8_t>> weights = std::nullopt);

struct CompletedAnalysis {
    GeeFit fit;
    PointEstimate hte;
    PointEstimate ate;
};

/// Outcome GEE on one completed dataset.
CompletedAnalysis analyze_completed(const TrialData& data, std::span<const int> modifier, const GeeOptions& options);

struct Inference {
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
    double between_var = 0.0;  // 0 for single-fit methods
    double nu_adj = 0.0;       // +inf for Wald intervals

    bool rejects_null() const { return ci_low > 0.0 || ci_high < 0.0; }
    bool covers(double value) const { return ci_low <= value && value <= ci_high; }
};

struct MethodResult {
    Inference hte;
    Inference ate;
    bool converged = true;  // every outcome GEE fit converged
};

/// Reference distribution for single-fit (CCA, SI, complete-data) intervals:
/// normal, or t with C - q degrees of freedom.
enum class WaldReference { Normal, T };

std::string_view wald_reference_token(WaldReference r);
WaldReference parse_wald_reference(std::string_view token);

struct AnalysisOptions {
    GeeOptions gee{};
    GlmmOptions glmm{};
    GibbsConfig gibbs{};
    int imputations = 15;
    NuObsMode nu_obs = NuObsMode::Standard;
    double level = 0.95;
    WaldReference wald = WaldReference::Normal;
};

Inference wald_inference(const PointEstimate& pe, double level,
                         double df = std::numeric_limits<double>::infinity());

/// Rubin pooling of per-dataset analyses.
MethodResult pool_analyses(std::span<const CompletedAnalysis> analyses, std::size_t n_clusters,
                           const AnalysisOptions& options);

/// Runs one method end to end. `imputation` carries the imputation-model
/// terms; its random-intercept flag is overridden per method (MMI and BMMI
/// multilevel, SI and MI not). Ignored for CCA. Throws ImputationFailure when
/// the imputation model cannot be fit.
MethodResult run_method(Method method, const TrialData& data, const Formula& imputation,
                        const AnalysisOptions& options, RngStream& rng);

/// The complete-data analysis with Wald inference.
MethodResult complete_data_result(const TrialData& data, std::span<const int> modifier, const AnalysisOptions& options);

}  // namespace crt

#endif  // CRT_ANALYSIS_HPP
