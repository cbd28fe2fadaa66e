#include "crt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace crt {

std::string_view method_token(Method m) {
    switch (m) {
        case Method::CCA: return "cca";
        case Method::SI: return "si";
        case Method::MI: return "mi";
        case Method::MMI: return "mmi";
        case Method::BMMI: return "bmmi";
    }
    return "?";
}

std::string_view method_name(Method m) {
    switch (m) {
        case Method::CCA: return "CCA";
        case Method::SI: return "SI";
        case Method::MI: return "MI";
        case Method::MMI: return "MMI";
        case Method::BMMI: return "BMMI";
    }
    return "?";
}

Method parse_method(std::string_view token) {
    for (Method m : kAllMethods)
        if (method_token(m) == token || method_name(m) == token) return m;
    throw std::invalid_argument("unknown method '" + std::string(token) + "'");
}

std::string_view estimand_name(Estimand e) { return e == Estimand::HTE ? "HTE" : "ATE"; }

PointEstimate ate_estimate(const GeeFit& fit, double mean_m) {
    if (fit.gamma.size() != 4) throw std::invalid_argument("ATE needs the [1, A, M, A:M] outcome model");
    Eigen::Vector4d grad(0.0, 1.0, 0.0, mean_m);
    const double var = grad.dot(fit.robust_cov * grad);
    return {fit.gamma[1] + fit.gamma[3] * mean_m, std::sqrt(std::max(var, 0.0))};
}

namespace {

double modifier_mean(std::span<const int> modifier, std::optional<std::span<const std::uint8_t>> weights) {
    double sum = 0.0, n = 0.0;
    for (std::size_t r = 0; r < modifier.size(); ++r) {
        if (weights && !(*weights)[r]) continue;
        sum += modifier[r];
        n += 1.0;
    }
    if (n == 0.0) throw std::runtime_error("no rows to average the modifier over");
    return sum / n;
}

}  // namespace

PointEstimate centered_ate(const TrialData& data, std::span<const int> modifier, const GeeOptions& options,
                           std::optional<std::span<const std::uint8_t>> weights) {
    const double m_bar = modifier_mean(modifier, weights);
    const auto n = static_cast<Eigen::Index>(data.n_total());
    DesignMatrix design;
    design.values.resize(n, 4);
    design.column_labels = {"(Intercept)", "A", "Mc", "A:Mc"};
    for (Eigen::Index r = 0; r < n; ++r) {
        const double a = data.treatment[static_cast<std::size_t>(r)];
        const double mc = modifier[static_cast<std::size_t>(r)] - m_bar;
        design.values.row(r) << 1.0, a, mc, a * mc;
    }
    const GeeFit fit = fit_gee(clustered_design(design, data.outcome, data.offsets, weights), options);
    return {fit.gamma[1], fit.robust_se(1)};
}

CompletedAnalysis analyze_completed(const TrialData& data, std::span<const int> modifier, const GeeOptions& options) {
    CompletedAnalysis out;
    out.fit = fit_gee(data, outcome_formula(), options, std::nullopt, modifier);
    out.hte = {out.fit.gamma[3], out.fit.robust_se(3)};
    out.ate = ate_estimate(out.fit, modifier_mean(modifier, std::nullopt));
    return out;
}

std::string_view wald_reference_token(WaldReference r) { return r == WaldReference::Normal ? "normal" : "t"; }

WaldReference parse_wald_reference(std::string_view token) {
    if (token == "normal") return WaldReference::Normal;
    if (token == "t") return WaldReference::T;
    throw std::invalid_argument("unknown Wald reference '" + std::string(token) + "'");
}

Inference wald_inference(const PointEstimate& pe, double level, double df) {
    const WaldInterval w = wald_interval(pe.estimate, pe.std_error, level, df);
    Inference out;
    out.estimate = pe.estimate;
    out.std_error = pe.std_error;
    out.ci_low = w.ci_low;
    out.ci_high = w.ci_high;
    out.p_value = w.p_value;
    out.nu_adj = std::numeric_limits<double>::infinity();
    return out;
}

namespace {

Inference from_pooled(const PooledResult& p) {
    Inference out;
    out.estimate = p.estimate;
    out.std_error = std::sqrt(p.total_var);
    out.ci_low = p.ci_low;
    out.ci_high = p.ci_high;
    out.p_value = p.p_value;
    out.between_var = p.between_var;
    out.nu_adj = p.nu_adj;
    return out;
}

MethodResult single_fit_result(const CompletedAnalysis& a, const AnalysisOptions& options, std::size_t clusters) {
    double df = std::numeric_limits<double>::infinity();
    if (options.wald == WaldReference::T) {
        df = static_cast<double>(clusters) - static_cast<double>(a.fit.gamma.size());
        if (!(df > 0.0)) throw std::runtime_error("too few clusters for t-based Wald intervals");
    }
    MethodResult out;
    out.hte = wald_inference(a.hte, options.level, df);
    out.ate = wald_inference(a.ate, options.level, df);
    out.converged = a.fit.converged;
    return out;
}

std::vector<CompletedAnalysis> analyze_all(const TrialData& data, const std::vector<CompletedDataset>& sets,
                                           const GeeOptions& options) {
    std::vector<CompletedAnalysis> out;
    out.reserve(sets.size());
    for (const CompletedDataset& s : sets) out.push_back(analyze_completed(data, s.modifier, options));
    return out;
}

}  // namespace

MethodResult pool_analyses(std::span<const CompletedAnalysis> analyses, std::size_t n_clusters,
                           const AnalysisOptions& options) {
    std::vector<double> hte, hte_var, ate, ate_var;
    MethodResult out;
    for (const CompletedAnalysis& a : analyses) {
        hte.push_back(a.hte.estimate);
        hte_var.push_back(a.hte.std_error * a.hte.std_error);
        ate.push_back(a.ate.estimate);
        ate_var.push_back(a.ate.std_error * a.ate.std_error);
        out.converged = out.converged && a.fit.converged;
    }
    out.hte = from_pooled(pool(hte, hte_var, n_clusters, options.level, options.nu_obs));
    out.ate = from_pooled(pool(ate, ate_var, n_clusters, options.level, options.nu_obs));
    return out;
}

MethodResult run_method(Method method, const TrialData& data, const Formula& imputation,
                        const AnalysisOptions& options, RngStream& rng) {
    const std::size_t C = data.n_clusters();
    switch (method) {
        case Method::CCA: {
            const CompletedDataset filled = observed_only(data);
            CompletedAnalysis a;
            a.fit = fit_gee(data, outcome_formula(), options.gee, data.observed);
            a.hte = {a.fit.gamma[3], a.fit.robust_se(3)};
            a.ate = ate_estimate(a.fit, modifier_mean(filled.modifier, data.observed));
            std::size_t used = 0;
            for (std::size_t i = 0; i < C; ++i)
                used += std::any_of(data.observed.begin() + static_cast<std::ptrdiff_t>(data.offsets[i]),
                                    data.observed.begin() + static_cast<std::ptrdiff_t>(data.offsets[i + 1]),
                                    [](std::uint8_t o) { return o != 0; });
            return single_fit_result(a, options, used);
        }
        case Method::SI: {
            Formula f = imputation;
            f.has_random_intercept = false;
            const ImputationModel model = fit_imputation_model(data, f, options.glmm);
            const CompletedDataset filled = draw_completion(data, model, rng);
            return single_fit_result(analyze_completed(data, filled.modifier, options.gee), options, C);
        }
        case Method::MI:
        case Method::MMI: {
            if (options.imputations < 2) throw std::invalid_argument("multiple imputation needs D >= 2");
            Formula f = imputation;
            f.has_random_intercept = method == Method::MMI;
            const ImputationModel model = fit_imputation_model(data, f, options.glmm);
            std::vector<CompletedDataset> sets;
            for (int d = 0; d < options.imputations; ++d) sets.push_back(draw_completion(data, model, rng));
            const auto analyses = analyze_all(data, sets, options.gee);
            return pool_analyses(analyses, C, options);
        }
        case Method::BMMI: {
            GibbsConfig cfg = options.gibbs;
            cfg.imputations = options.imputations;
            cfg.glmm = options.glmm;
            const BmmiResult chain = bmmi_impute(data, imputation, cfg, rng);
            const auto analyses = analyze_all(data, chain.datasets, options.gee);
            return pool_analyses(analyses, C, options);
        }
    }
    throw std::logic_error("unhandled method");
}

MethodResult complete_data_result(const TrialData& data, std::span<const int> modifier, const AnalysisOptions& options) {
    return single_fit_result(analyze_completed(data, modifier, options.gee), options, data.n_clusters());
}

}  // namespace crt
