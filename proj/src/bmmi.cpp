#include "crt/bmmi.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "crt/polya_gamma.hpp"
#include "crt/text.hpp"

namespace crt {

std::string_view tau_update_token(TauUpdate mode) {
    return mode == TauUpdate::Standard ? "standard" : "literal";
}

TauUpdate parse_tau_update(std::string_view token) {
    if (token == "standard") return TauUpdate::Standard;
    if (token == "literal") return TauUpdate::Literal;
    throw std::invalid_argument("unknown tau update '" + std::string(token) + "'");
}

namespace {

Eigen::VectorXd linear_predictor(const GibbsModel& model, const GibbsState& state) {
    Eigen::VectorXd lp = model.design * state.eta;
    const auto& idx = model.data->cluster_index;
    for (Eigen::Index r = 0; r < lp.size(); ++r) lp[r] += state.alpha[idx[static_cast<std::size_t>(r)]];
    return lp;
}

}  // namespace

GibbsModel gibbs_model(const TrialData& data, const Formula& formula, const GibbsConfig& config) {
    if (!(config.prior_variance > 0.0)) throw std::invalid_argument("prior variance must be positive");
    if (config.burnin < 0 || config.thin < 1 || config.imputations < 1)
        throw std::invalid_argument("invalid chain length settings");

    GibbsModel model;
    model.data = &data;
    model.design = build_design(formula, data).values;
    for (std::size_t r = 0; r < data.n_total(); ++r)
        if (!data.observed[r]) model.missing_rows.push_back(r);

    Formula multilevel = formula;
    multilevel.has_random_intercept = true;
    try {
        model.prior_mean = fit_imputation_model(data, multilevel, config.glmm).fit.eta;
    } catch (const ImputationFailure&) {
        Formula plain = formula;
        plain.has_random_intercept = false;
        model.prior_mean = fit_imputation_model(data, plain, config.glmm).fit.eta;
        model.init_fallback = true;
    }
    model.prior_precision_diag = Eigen::VectorXd::Constant(model.prior_mean.size(), 1.0 / config.prior_variance);
    return model;
}

GibbsState gibbs_init(const GibbsModel& model, const GibbsConfig& config, RngStream& rng) {
    const TrialData& data = *model.data;
    GibbsState s;
    s.eta = model.prior_mean;
    s.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n_clusters()));
    s.tau_alpha = config.initial_tau;
    s.omega = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n_total()));
    s.m_current = observed_only(data).modifier;

    double observed = 0.0, ones = 0.0;
    for (std::size_t r = 0; r < data.n_total(); ++r) {
        if (!data.observed[r]) continue;
        observed += 1.0;
        ones += data.modifier[r];
    }
    const double prevalence = observed > 0.0 ? ones / observed : 0.5;
    for (std::size_t r : model.missing_rows) s.m_current[r] = rng.bernoulli(prevalence);
    return s;
}

EtaConditional eta_conditional(const GibbsModel& model, const GibbsState& state) {
    const auto q = model.design.cols();
    const auto& idx = model.data->cluster_index;
    EtaConditional out;
    out.precision = model.prior_precision_diag.asDiagonal();
    Eigen::MatrixXd scaled = model.design;
    Eigen::VectorXd rhs_terms(model.design.rows());
    for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
        const double w = state.omega[r];
        scaled.row(r) *= std::sqrt(w);
        const double kappa = state.m_current[static_cast<std::size_t>(r)] - 0.5;
        rhs_terms[r] = kappa - w * state.alpha[idx[static_cast<std::size_t>(r)]];
    }
    out.precision.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    out.precision.triangularView<Eigen::StrictlyUpper>() = out.precision.transpose();
    const Eigen::VectorXd rhs =
        model.prior_precision_diag.cwiseProduct(model.prior_mean) + model.design.transpose() * rhs_terms;
    Eigen::LLT<Eigen::MatrixXd> llt(out.precision);
    if (llt.info() != Eigen::Success) {
        Eigen::MatrixXd jittered = out.precision + 1e-8 * Eigen::MatrixXd::Identity(q, q);
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) throw std::runtime_error("eta conditional precision is not positive definite");
    }
    out.mean = llt.solve(rhs);
    return out;
}

void gibbs_sweep(GibbsState& state, const GibbsModel& model, const GibbsConfig& config, RngStream& rng) {
    const TrialData& data = *model.data;
    const auto n = static_cast<Eigen::Index>(data.n_total());
    const auto q = model.design.cols();
    const auto& idx = data.cluster_index;

    // 4: impute missing modifiers at the current linear predictor
    Eigen::VectorXd lp = linear_predictor(model, state);
    for (std::size_t r : model.missing_rows) state.m_current[r] = rng.bernoulli(expit(lp[static_cast<Eigen::Index>(r)]));

    // 5(b): Polya-Gamma augmentation
    for (Eigen::Index r = 0; r < n; ++r) state.omega[r] = pg_sample(1, lp[r], rng);

    // 5(c): eta | omega, alpha, m
    Eigen::MatrixXd precision = model.prior_precision_diag.asDiagonal();
    Eigen::MatrixXd scaled(n, q);
    Eigen::VectorXd rhs_terms(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double w = state.omega[r];
        scaled.row(r) = std::sqrt(w) * model.design.row(r);
        rhs_terms[r] = (state.m_current[static_cast<std::size_t>(r)] - 0.5) - w * state.alpha[idx[static_cast<std::size_t>(r)]];
    }
    precision.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(precision.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) {
        ++state.jitter_retries;
        Eigen::MatrixXd jittered = precision.selfadjointView<Eigen::Lower>();
        jittered.diagonal().array() += 1e-8;
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) throw std::runtime_error("eta update: precision is not positive definite");
    }
    const Eigen::VectorXd rhs =
        model.prior_precision_diag.cwiseProduct(model.prior_mean) + model.design.transpose() * rhs_terms;
    state.eta = mvn_sample_precision(llt.solve(rhs), llt, rng);

    // 5(d): alpha_i | eta, omega, m, tau
    const Eigen::VectorXd fixed = model.design * state.eta;
    const std::size_t clusters = data.n_clusters();
    double rate_sum = 0.0;
    for (std::size_t i = 0; i < clusters; ++i) {
        double prec = state.tau_alpha;
        double num = 0.0;
        for (std::size_t r = data.offsets[i]; r < data.offsets[i + 1]; ++r) {
            const auto rr = static_cast<Eigen::Index>(r);
            prec += state.omega[rr];
            num += (state.m_current[r] - 0.5) - state.omega[rr] * fixed[rr];
        }
        const double a = rng.normal(num / prec, 1.0 / prec);
        state.alpha[static_cast<Eigen::Index>(i)] = a;
        const double weight = config.tau_update == TauUpdate::Literal ? static_cast<double>(data.cluster_size(i)) : 1.0;
        rate_sum += weight * a * a;
    }

    // 5(e): tau | alpha
    state.tau_alpha = rng.gamma(config.c_hyper + 0.5 * static_cast<double>(clusters), config.d_hyper + 0.5 * rate_sum);
    ++state.sweeps;

    if (config.trace) {
        std::ostream& out = *config.trace;
        out << state.sweeps;
        for (Eigen::Index k = 0; k < state.eta.size(); ++k) out << ',' << format_real(state.eta[k]);
        out << ',' << format_real(state.tau_alpha) << '\n';
    }
}

BmmiResult bmmi_impute(const TrialData& data, const Formula& formula, const GibbsConfig& config, RngStream& rng) {
    const GibbsModel model = gibbs_model(data, formula, config);
    GibbsState state = gibbs_init(model, config, rng);
    if (config.trace) {
        *config.trace << "sweep";
        for (Eigen::Index k = 0; k < state.eta.size(); ++k) *config.trace << ",eta" << k;
        *config.trace << ",tau\n";
    }

    BmmiResult out;
    out.init_fallback = model.init_fallback;
    for (int sweep = 1; sweep <= config.chain_length(); ++sweep) {
        gibbs_sweep(state, model, config, rng);
        if (sweep > config.burnin && (sweep - config.burnin) % config.thin == 0) {
            out.datasets.push_back(CompletedDataset{&data, state.m_current});
            out.collected_at.push_back(sweep);
        }
    }
    out.jitter_retries = state.jitter_retries;
    return out;
}

}  // namespace crt
