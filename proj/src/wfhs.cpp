#include "crt/wfhs.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <stdexcept>

#include "crt/dgm.hpp"
#include "crt/text.hpp"

namespace crt {

TrialData prepare_wfhs(const TrialData& raw, const WfhsConfig& config) {
    if (!raw.fully_observed()) throw std::invalid_argument("replication data must have a fully observed modifier");
    auto column = [&](const std::string& name) {
        const auto it = std::find(raw.covariate_names.begin(), raw.covariate_names.end(), name);
        if (it == raw.covariate_names.end()) throw std::invalid_argument("no covariate column named '" + name + "'");
        return static_cast<Eigen::Index>(it - raw.covariate_names.begin());
    };
    const Eigen::Index c = column(config.control_column), a = column(config.autonomy_column);
    TrialData out = raw;
    out.covariates.resize(raw.covariates.rows(), 2);
    for (Eigen::Index r = 0; r < raw.covariates.rows(); ++r) {
        out.covariates(r, 0) = raw.covariates(r, c) >= config.threshold ? 1.0 : 0.0;
        out.covariates(r, 1) = raw.covariates(r, a) >= config.threshold ? 1.0 : 0.0;
    }
    out.covariate_names = {"C4", "A4"};
    return out;
}

std::vector<std::uint8_t> impose_missingness(const TrialData& d, int scenario, RngStream& rng) {
    if (scenario < 0 || scenario > 3) throw std::invalid_argument("replication scenario must be 0-3");
    std::vector<std::uint8_t> mask(d.n_total(), 1);
    if (scenario == 0) return mask;
    std::vector<double> zeta(d.n_clusters(), 0.0);
    if (scenario == 3) {
        const double var = latent_icc_to_variance(0.1);
        for (double& z : zeta) z = rng.normal(0.0, var);
    }
    for (std::size_t r = 0; r < d.n_total(); ++r) {
        const auto rr = static_cast<Eigen::Index>(r);
        const double ta = d.treatment[r], c4 = d.covariates(rr, 0), a4 = d.covariates(rr, 1);
        double p;
        if (scenario == 1) {
            p = 0.8;
        } else {
            double logit = 2.0 + 0.5 * ta - 0.6 * c4 - 0.3 * a4;
            if (scenario == 3)
                logit += 0.05 * ta * c4 - 0.15 * ta * a4 + 0.1 * ta * c4 * a4 + zeta[static_cast<std::size_t>(d.cluster_index[r])];
            p = expit(logit);
        }
        mask[r] = static_cast<std::uint8_t>(rng.bernoulli(p));
    }
    return mask;
}

namespace {

struct ReplicateOutput {
    std::vector<IterationRecord> records;
    std::vector<FailureEntry> failures;
    double missing_fraction = 0.0;
};

ReplicateOutput run_replicate(const TrialData& prepared, const WfhsConfig& config, int rep) {
    const std::uint64_t seed = config.seed_base * static_cast<std::uint64_t>(rep);
    RngStream mask_rng(seed);
    const auto mask = impose_missingness(prepared, config.scenario, mask_rng);
    TrialData data = with_mask(prepared, mask);

    ReplicateOutput out;
    out.missing_fraction = static_cast<double>(data.n_missing()) / static_cast<double>(data.n_total());
    const Formula imputation = all_two_way_formula(data.n_covariates(), false);
    for (Method m : config.methods) {
        const std::string spec = m == Method::CCA ? "none" : "twoway";
        RngStream rng = RngStream::derived({seed, static_cast<std::uint64_t>(m), 0});
        try {
            append_records(out.records, rep, m, spec, run_method(m, data, imputation, config.analysis, rng));
        } catch (const std::runtime_error& e) {
            out.failures.push_back({rep, m, spec, e.what()});
        }
    }
    return out;
}

}  // namespace

WfhsResult wfhs_replicate(const TrialData& prepared, const WfhsConfig& config) {
    if (config.replications < 1) throw std::invalid_argument("need at least one replication");
    if (config.threads < 1) throw std::invalid_argument("thread count must be positive");
    const int n = config.replications;
    std::vector<ReplicateOutput> parts(static_cast<std::size_t>(n));
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.threads)
    for (int i = 0; i < n; ++i) {
        try {
            parts[static_cast<std::size_t>(i)] = run_replicate(prepared, config, i + 1);
        } catch (...) {
#pragma omp critical(crt_wfhs_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    WfhsResult out;
    for (ReplicateOutput& p : parts) {
        out.records.insert(out.records.end(), p.records.begin(), p.records.end());
        out.failures.insert(out.failures.end(), p.failures.begin(), p.failures.end());
        out.missing_fraction.push_back(p.missing_fraction);
    }
    out.complete = complete_data_result(prepared, prepared.modifier, config.analysis);
    out.summary = summarize_wfhs(out.records, out.failures, out.complete, config.methods);
    return out;
}

std::vector<WfhsSummaryRow> summarize_wfhs(std::span<const IterationRecord> records,
                                           std::span<const FailureEntry> failures, const MethodResult& complete,
                                           std::span<const Method> methods) {
    std::vector<WfhsSummaryRow> out;
    for (Estimand e : {Estimand::HTE, Estimand::ATE}) {
        const Inference& ref = e == Estimand::HTE ? complete.hte : complete.ate;
        const double ref_width = ref.ci_high - ref.ci_low;
        WfhsSummaryRow c;
        c.method = "Complete";
        c.estimand = e;
        c.n_used = 1;
        c.mean_estimate = ref.estimate;
        c.mean_ci_low = ref.ci_low;
        c.mean_ci_high = ref.ci_high;
        c.pct_cover_complete = 100.0;
        out.push_back(c);
        for (Method m : methods) {
            WfhsSummaryRow row;
            row.method = std::string(method_name(m));
            row.estimand = e;
            row.n_dropped = static_cast<int>(
                std::count_if(failures.begin(), failures.end(), [&](const FailureEntry& f) { return f.method == m; }));
            std::vector<double> est;
            double narrower = 0.0, cover = 0.0;
            for (const IterationRecord& r : records) {
                if (r.method != m || r.estimand != e || !r.converged) continue;
                est.push_back(r.estimate);
                row.mean_ci_low += r.ci_low;
                row.mean_ci_high += r.ci_high;
                narrower += (r.ci_high - r.ci_low) < ref_width ? 1.0 : 0.0;
                cover += (r.ci_low <= ref.ci_low && ref.ci_high <= r.ci_high) ? 1.0 : 0.0;
            }
            row.n_used = static_cast<int>(est.size());
            if (!est.empty()) {
                const double n = static_cast<double>(est.size());
                for (double v : est) row.mean_estimate += v;
                row.mean_estimate /= n;
                double ss = 0.0;
                for (double v : est) ss += (v - row.mean_estimate) * (v - row.mean_estimate);
                row.sd_estimate = est.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
                row.mean_ci_low /= n;
                row.mean_ci_high /= n;
                row.pct_narrower = 100.0 * narrower / n;
                row.pct_cover_complete = 100.0 * cover / n;
            }
            out.push_back(row);
        }
    }
    return out;
}

void write_wfhs_summary(std::span<const WfhsSummaryRow> rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "method,estimand,n_used,n_dropped,mean_estimate,sd_estimate,mean_ci_low,mean_ci_high,pct_narrower,"
           "pct_cover_complete\n";
    for (const WfhsSummaryRow& r : rows)
        out << r.method << ',' << estimand_name(r.estimand) << ',' << r.n_used << ',' << r.n_dropped << ','
            << format_real(r.mean_estimate) << ',' << format_real(r.sd_estimate) << ',' << format_real(r.mean_ci_low)
            << ',' << format_real(r.mean_ci_high) << ',' << format_real(r.pct_narrower) << ','
            << format_real(r.pct_cover_complete) << '\n';
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

TrialData make_wfhs_standin(std::uint64_t seed) {
    RngStream rng(seed);
    constexpr int sites = 30;
    // 1-5 response distribution; P(>= 4) = 0.87
    constexpr double cum[5] = {0.02, 0.06, 0.13, 0.50, 1.0};
    auto ordinal = [&]() {
        const double u = rng.uniform();
        int k = 0;
        while (u >= cum[k]) ++k;
        return static_cast<double>(k + 1);
    };

    std::vector<int> arm(sites, 0);
    for (int i = 0; i < sites / 2; ++i) arm[static_cast<std::size_t>(i)] = 1;
    for (std::size_t i = sites - 1; i > 0; --i) std::swap(arm[i], arm[rng.below(i + 1)]);

    TrialRows rows;
    std::vector<double> control, autonomy;
    for (int i = 0; i < sites; ++i) {
        const int n = 30 + static_cast<int>(rng.below(60));
        const double site_m = rng.normal(0.0, 0.3);
        const double site_y = rng.normal(0.0, 0.04);
        const int a = arm[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            const double c = ordinal(), au = ordinal();
            const double c4 = c >= 4 ? 1 : 0, a4 = au >= 4 ? 1 : 0;
            const int m = rng.bernoulli(expit(-0.6 + 0.5 * c4 + 0.4 * a4 + site_m));
            const double y = 3.0 + 0.15 * a + 0.25 * m - 0.3 * a * m + 0.2 * c4 + 0.1 * a4 + site_y + rng.normal(0.0, 0.36);
            rows.cluster_id.push_back(i + 1);
            rows.treatment.push_back(a);
            rows.outcome.push_back(y);
            rows.modifier.push_back(m);
            control.push_back(c);
            autonomy.push_back(au);
        }
    }
    rows.covariates.resize(static_cast<Eigen::Index>(control.size()), 2);
    for (std::size_t r = 0; r < control.size(); ++r) {
        rows.covariates(static_cast<Eigen::Index>(r), 0) = control[r];
        rows.covariates(static_cast<Eigen::Index>(r), 1) = autonomy[r];
    }
    rows.covariate_names = {"control", "autonomy"};
    return make_trial(rows);
}

}  // namespace crt
