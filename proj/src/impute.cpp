#include "crt/impute.hpp"

#include <stdexcept>

namespace crt {

std::string_view spec_token(SpecKind kind) {
    switch (kind) {
        case SpecKind::MainEffects: return "main";
        case SpecKind::AxY: return "axy";
        case SpecKind::XxA: return "xxa";
        case SpecKind::XxA_YxA: return "xxa-yxa";
        case SpecKind::ThreeWay: return "threeway";
    }
    return "?";
}

SpecKind parse_spec(std::string_view token) {
    for (SpecKind k : kAllSpecs) {
        if (spec_token(k) == token) return k;
    }
    throw std::invalid_argument("unknown imputation spec '" + std::string(token) + "'");
}

Formula expand_formula(SpecKind kind, std::size_t p, bool multilevel) {
    using namespace term;
    if (p < 1) throw std::invalid_argument("expand_formula: at least one covariate required");
    const bool xa = kind == SpecKind::XxA || kind == SpecKind::XxA_YxA || kind == SpecKind::ThreeWay;
    const bool ay = kind == SpecKind::AxY || kind == SpecKind::XxA_YxA || kind == SpecKind::ThreeWay;
    const bool three = kind == SpecKind::ThreeWay;
    const int pi = static_cast<int>(p);

    Formula f;
    f.has_random_intercept = multilevel;
    f.terms.push_back(intercept());
    for (int k = 0; k < pi; ++k) f.terms.push_back(of({X(k)}));
    f.terms.push_back(of({A()}));
    f.terms.push_back(of({Y()}));
    if (xa)
        for (int k = 0; k < pi; ++k) f.terms.push_back(of({X(k), A()}));
    if (ay) f.terms.push_back(of({A(), Y()}));
    if (three) {
        for (int k = 0; k < pi; ++k) f.terms.push_back(of({X(k), Y()}));
        for (int k = 0; k < pi; ++k) f.terms.push_back(of({X(k), A(), Y()}));
    }
    return f;
}

Formula all_two_way_formula(std::size_t p, bool multilevel) {
    using namespace term;
    std::vector<Factor> base;
    for (int k = 0; k < static_cast<int>(p); ++k) base.push_back(X(k));
    base.push_back(A());
    base.push_back(Y());
    Formula f;
    f.has_random_intercept = multilevel;
    f.terms.push_back(intercept());
    for (const Factor& b : base) f.terms.push_back(of({b}));
    for (std::size_t i = 0; i < base.size(); ++i)
        for (std::size_t j = i + 1; j < base.size(); ++j) f.terms.push_back(of({base[i], base[j]}));
    return f;
}

ImputationModel fit_imputation_model(const TrialData& data, const Formula& formula, const GlmmOptions& options) {
    if (formula.uses(Variable::Modifier)) throw std::invalid_argument("imputation model cannot use M as a predictor");
    const DesignMatrix design = build_design(formula, data);

    std::vector<int> responses, clusters;
    for (std::size_t r = 0; r < data.n_total(); ++r) {
        if (!data.observed[r]) continue;
        responses.push_back(data.modifier[r]);
        clusters.push_back(data.cluster_index[r]);
    }
    if (responses.empty()) throw ImputationFailure("no complete cases to fit the imputation model");
    const Eigen::MatrixXd x_obs = select_rows(design.values, data.observed);

    ImputationModel model;
    model.formula = formula;
    GlmmOptions opts = options;
    opts.random_intercept = formula.has_random_intercept;
    model.fit = formula.has_random_intercept
                    ? fit_logistic_glmm(responses, x_obs, clusters, data.n_clusters(), opts)
                    : fit_logistic(responses, x_obs, opts);
    if (model.fit.alpha_hat.size() == 0)
        model.fit.alpha_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n_clusters()));
    if (!model.fit.converged)
        throw ImputationFailure(model.fit.separated ? "imputation model separated" : "imputation model did not converge");

    for (std::size_t r = 0; r < data.n_total(); ++r) {
        if (data.observed[r]) continue;
        model.missing_rows.push_back(r);
        // Clusters without complete cases carry a zero EBLUP, i.e. the marginal prediction.
        model.missing_prob.push_back(
            predict_prob(model.fit, design.values.row(static_cast<Eigen::Index>(r)),
                         formula.has_random_intercept ? std::optional<int>(data.cluster_index[r]) : std::nullopt));
    }
    return model;
}

CompletedDataset observed_only(const TrialData& data) {
    CompletedDataset out{&data, std::vector<int>(data.n_total(), 0)};
    for (std::size_t r = 0; r < data.n_total(); ++r)
        if (data.observed[r]) out.modifier[r] = data.modifier[r];
    return out;
}

CompletedDataset draw_completion(const TrialData& data, const ImputationModel& model, RngStream& rng) {
    CompletedDataset out = observed_only(data);
    for (std::size_t k = 0; k < model.missing_rows.size(); ++k)
        out.modifier[model.missing_rows[k]] = rng.bernoulli(model.missing_prob[k]);
    return out;
}

CompletedDataset single_impute(const TrialData& data, const ImputationSpec& spec, RngStream& rng) {
    const ImputationModel model =
        fit_imputation_model(data, expand_formula(spec.kind, data.n_covariates(), spec.multilevel), spec.glmm);
    return draw_completion(data, model, rng);
}

MultipleImputation multiple_impute(const TrialData& data, const ImputationSpec& spec, RngStream& rng) {
    if (spec.imputations < 1) throw std::invalid_argument("multiple imputation needs D >= 1");
    MultipleImputation out;
    out.model = fit_imputation_model(data, expand_formula(spec.kind, data.n_covariates(), spec.multilevel), spec.glmm);
    out.datasets.reserve(static_cast<std::size_t>(spec.imputations));
    for (int d = 0; d < spec.imputations; ++d) out.datasets.push_back(draw_completion(data, out.model, rng));
    return out;
}

}  // namespace crt
