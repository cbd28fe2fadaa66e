#ifndef CRT_HARNESS_HPP
#define CRT_HARNESS_HPP

#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "crt/analysis.hpp"
#include "crt/dgm.hpp"
#include "crt/impute.hpp"

namespace crt {

struct IterationRecord {
    int iteration = 0;
    Method method = Method::CCA;
    std::string spec;  // "none" for CCA
    Estimand estimand = Estimand::HTE;
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool rejected_null = false;
    bool converged = true;
};

/// An aborted method run (imputation-model failure or numerical breakdown).
struct FailureEntry {
    int iteration = 0;
    Method method = Method::CCA;
    std::string spec;
    std::string message;
};

struct SimulationConfig {
    ScenarioConfig scenario{};
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    std::vector<SpecKind> specs{std::begin(kAllSpecs), std::end(kAllSpecs)};
    int iterations = 200;
    int first_iteration = 1;
    std::uint64_t seed_base = 1000;
    int threads = 1;
    AnalysisOptions analysis{};
};

struct IterationOutput {
    std::vector<IterationRecord> records;
    std::vector<FailureEntry> failures;
    double missing_fraction = 0.0;
};

/// Iteration k: data from RngStream(seed_base * k); each (method, spec) pair
/// draws from RngStream::derived({seed_base * k, method, spec}) so results do
/// not depend on which other methods are enabled.
IterationOutput run_iteration(const SimulationConfig& config, int k);

struct SimulationResult {
    std::vector<IterationRecord> records;
    std::vector<FailureEntry> failures;
    double mean_missing_fraction = 0.0;
};

/// Iterations in order on the calling thread.
SimulationResult run_simulation_serial(const SimulationConfig& config);

/// OpenMP map over iterations, gathered in iteration order; output is
/// identical to run_simulation_serial for any thread count.
SimulationResult run_simulation(const SimulationConfig& config);

/// Appends the HTE and ATE records of one method run.
void append_records(std::vector<IterationRecord>& out, int iteration, Method method, const std::string& spec,
                    const MethodResult& result);

}  // namespace crt

#endif  // CRT_HARNESS_HPP
