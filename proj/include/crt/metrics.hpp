#ifndef CRT_METRICS_HPP
#define CRT_METRICS_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crt/harness.hpp"

namespace crt {

struct Truth {
    double hte = 0.0;
    double ate = 0.0;

    double of(Estimand e) const { return e == Estimand::HTE ? hte : ate; }
};

/// Performance of one (method, spec, estimand) cell over its converged
/// records. Optional fields are NA when the cell is empty. The cca_* fields
/// are CCA measures over the same iterations (paired comparison).
struct MetricRow {
    Method method = Method::CCA;
    std::string spec;
    Estimand estimand = Estimand::HTE;
    double truth = 0.0;
    std::size_t n_records = 0;
    std::size_t n_converged = 0;
    std::optional<double> bias;
    std::optional<double> mcse_bias;
    std::optional<double> coverage;
    std::optional<double> mcse_coverage;
    std::optional<double> rejection_rate;  // Type I error under the null, power otherwise
    std::optional<double> mse;
    std::optional<double> empirical_se;
    std::optional<double> mean_se;
    std::optional<double> cca_bias;
    std::optional<double> cca_coverage;
    std::optional<double> cca_mse;
    std::optional<double> cca_rejection_rate;
};

/// Cells in first-appearance order of (method, spec), HTE before ATE.
std::vector<MetricRow> compute_metrics(std::span<const IterationRecord> records, const Truth& truth);

/// Row lookup; nullptr when absent.
const MetricRow* find_metric(std::span<const MetricRow> rows, Method method, const std::string& spec, Estimand estimand);

}  // namespace crt

#endif  // CRT_METRICS_HPP
