#ifndef CRT_IMPUTE_HPP
#define CRT_IMPUTE_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "crt/data.hpp"
#include "crt/glmm.hpp"
#include "crt/rng.hpp"

namespace crt {

/// The five imputation-model rows, from main effects only to the full
/// three-way X*A*Y model.
enum class SpecKind { MainEffects, AxY, XxA, XxA_YxA, ThreeWay };

inline constexpr SpecKind kAllSpecs[] = {SpecKind::MainEffects, SpecKind::AxY, SpecKind::XxA, SpecKind::XxA_YxA,
                                         SpecKind::ThreeWay};

/// CLI token: main, axy, xxa, xxa-yxa, threeway.
std::string_view spec_token(SpecKind kind);
SpecKind parse_spec(std::string_view token);

struct ImputationSpec {
    SpecKind kind = SpecKind::ThreeWay;
    bool multilevel = false;
    int imputations = 15;
    GlmmOptions glmm{};
};

/// Imputation-model formula for `p` covariates:
///   [1, X1..Xp, A, Y] + (Xk:A) + (A:Y) + (Xk:Y, Xk:A:Y)
/// with the interaction blocks switched on by `kind`.
Formula expand_formula(SpecKind kind, std::size_t p, bool multilevel = false);

/// Main effects of X1..Xp, A, Y and all their pairwise products.
Formula all_two_way_formula(std::size_t p, bool multilevel = false);

struct CompletedDataset {
    const TrialData* base = nullptr;
    std::vector<int> modifier;  // M*, equal to the observed value wherever observed
};

/// Thrown when the imputation model cannot be fit (separation or
/// non-convergence); the harness counts these instead of aborting.
class ImputationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fitted imputation model with the Bernoulli probability of every missing
/// individual. Parameters are fixed once fitted (improper imputation).
struct ImputationModel {
    GlmmFit fit;
    Formula formula;
    std::vector<std::size_t> missing_rows;
    std::vector<double> missing_prob;
};

/// Fits `formula` to the complete cases (GLMM when the formula carries a
/// random intercept). Throws ImputationFailure when the fit fails.
ImputationModel fit_imputation_model(const TrialData& data, const Formula& formula, const GlmmOptions& options = {});

/// One completed dataset drawn from a fitted model.
CompletedDataset draw_completion(const TrialData& data, const ImputationModel& model, RngStream& rng);

/// Observed modifiers with missing entries set to 0 (for designs that never
/// touch the missing rows).
CompletedDataset observed_only(const TrialData& data);

CompletedDataset single_impute(const TrialData& data, const ImputationSpec& spec, RngStream& rng);

struct MultipleImputation {
    ImputationModel model;
    std::vector<CompletedDataset> datasets;
};

/// D completions from one fitted model. With D = 1 and a single-level spec
/// this is exactly single_impute.
MultipleImputation multiple_impute(const TrialData& data, const ImputationSpec& spec, RngStream& rng);

}  // namespace crt

#endif  // CRT_IMPUTE_HPP
