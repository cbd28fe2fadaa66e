#ifndef CRT_REPORT_HPP
#define CRT_REPORT_HPP

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crt/harness.hpp"
#include "crt/metrics.hpp"

namespace crt {

/// iteration,method,spec,estimand,estimate,std_error,ci_low,ci_high,rejected_null,converged
void write_records(std::span<const IterationRecord> records, const std::string& path);
std::vector<IterationRecord> read_records(const std::string& path);

/// iteration,method,spec,message
void write_failures(std::span<const FailureEntry> failures, const std::string& path);

/// One row per MetricRow; empty cells are written as NA.
void write_metrics(std::span<const MetricRow> rows, const std::string& path);

/// One SVG per estimand: rows bias / coverage / MSE / rejection rate,
/// columns SI, MI, MMI, BMMI, x axis the imputation specs, dashed CCA line.
/// Returns the files written.
std::vector<std::string> write_figures(std::span<const MetricRow> rows, const std::string& dir,
                                       const std::string& title);

/// SVG for one estimand (exposed for tests).
std::string render_figure(std::span<const MetricRow> rows, Estimand estimand, const std::string& title);

void write_json(const nlohmann::json& value, const std::string& path);

}  // namespace crt

#endif  // CRT_REPORT_HPP
