#include "crt/metrics.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace crt {
namespace {

struct Summary {
    std::size_t n = 0;
    double bias = 0.0, mcse_bias = 0.0, coverage = 0.0, mcse_coverage = 0.0, rejection = 0.0, mse = 0.0, sd = 0.0,
           mean_se = 0.0;
};

Summary summarize(const std::vector<const IterationRecord*>& rows, double truth) {
    Summary s;
    s.n = rows.size();
    if (s.n == 0) return s;
    const double n = static_cast<double>(s.n);
    double mean = 0.0;
    for (const auto* r : rows) {
        mean += r->estimate;
        s.coverage += (r->ci_low <= truth && truth <= r->ci_high) ? 1.0 : 0.0;
        s.rejection += r->rejected_null ? 1.0 : 0.0;
        s.mse += (r->estimate - truth) * (r->estimate - truth);
        s.mean_se += r->std_error;
    }
    mean /= n;
    s.bias = mean - truth;
    s.coverage /= n;
    s.rejection /= n;
    s.mse /= n;
    s.mean_se /= n;
    double ss = 0.0;
    for (const auto* r : rows) ss += (r->estimate - mean) * (r->estimate - mean);
    s.sd = s.n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.mcse_bias = s.sd / std::sqrt(n);
    s.mcse_coverage = std::sqrt(s.coverage * (1.0 - s.coverage) / n);
    return s;
}

}  // namespace

std::vector<MetricRow> compute_metrics(std::span<const IterationRecord> records, const Truth& truth) {
    using Key = std::tuple<Method, std::string>;
    std::vector<Key> order;
    std::map<Key, std::map<Estimand, std::vector<const IterationRecord*>>> cells;
    std::map<Estimand, std::map<int, const IterationRecord*>> cca;

    for (const IterationRecord& r : records) {
        Key key{r.method, r.spec};
        if (!cells.count(key)) order.push_back(key);
        cells[key][r.estimand].push_back(&r);
        if (r.method == Method::CCA && r.converged) cca[r.estimand][r.iteration] = &r;
    }

    std::vector<MetricRow> out;
    for (const Key& key : order) {
        for (Estimand e : {Estimand::HTE, Estimand::ATE}) {
            MetricRow row;
            row.method = std::get<0>(key);
            row.spec = std::get<1>(key);
            row.estimand = e;
            row.truth = truth.of(e);
            const auto& all = cells[key][e];
            row.n_records = all.size();
            std::vector<const IterationRecord*> used, paired;
            for (const auto* r : all) {
                if (!r->converged) continue;
                used.push_back(r);
                auto it = cca[e].find(r->iteration);
                if (it != cca[e].end()) paired.push_back(it->second);
            }
            row.n_converged = used.size();
            if (!used.empty()) {
                const Summary s = summarize(used, row.truth);
                row.bias = s.bias;
                row.mcse_bias = s.mcse_bias;
                row.coverage = s.coverage;
                row.mcse_coverage = s.mcse_coverage;
                row.rejection_rate = s.rejection;
                row.mse = s.mse;
                row.empirical_se = s.sd;
                row.mean_se = s.mean_se;
            }
            if (!paired.empty()) {
                const Summary s = summarize(paired, row.truth);
                row.cca_bias = s.bias;
                row.cca_coverage = s.coverage;
                row.cca_mse = s.mse;
                row.cca_rejection_rate = s.rejection;
            }
            out.push_back(std::move(row));
        }
    }
    return out;
}

const MetricRow* find_metric(std::span<const MetricRow> rows, Method method, const std::string& spec, Estimand estimand) {
    for (const MetricRow& r : rows)
        if (r.method == method && r.spec == spec && r.estimand == estimand) return &r;
    return nullptr;
}

}  // namespace crt
