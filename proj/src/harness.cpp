#include "crt/harness.hpp"

#include <exception>
#include <stdexcept>


namespace crt {

void append_records(std::vector<IterationRecord>& out, int iteration, Method method, const std::string& spec,
                    const MethodResult& result) {
    for (Estimand e : {Estimand::HTE, Estimand::ATE}) {
        const Inference& inf = e == Estimand::HTE ? result.hte : result.ate;
        IterationRecord r;
        r.iteration = iteration;
        r.method = method;
        r.spec = spec;
        r.estimand = e;
        r.estimate = inf.estimate;
        r.std_error = inf.std_error;
        r.ci_low = inf.ci_low;
        r.ci_high = inf.ci_high;
        r.rejected_null = inf.rejects_null();
        r.converged = result.converged;
        out.push_back(r);
    }
}

IterationOutput run_iteration(const SimulationConfig& config, int k) {
    if (k < 1) throw std::invalid_argument("iterations are numbered from 1");
    const std::uint64_t seed = config.seed_base * static_cast<std::uint64_t>(k);
    RngStream data_rng(seed);
    const GeneratedTrial trial = generate(config.scenario, data_rng);
    const TrialData& data = trial.data;

    IterationOutput out;
    out.missing_fraction = trial.missing_fraction;

    auto attempt = [&](Method method, std::size_t spec_key, const std::string& spec, const Formula& f) {
        RngStream rng = RngStream::derived({seed, static_cast<std::uint64_t>(method), spec_key});
        try {
            append_records(out.records, k, method, spec, run_method(method, data, f, config.analysis, rng));
        } catch (const std::runtime_error& e) {
            out.failures.push_back({k, method, spec, e.what()});
        }
    };

    for (Method m : config.methods) {
        if (m == Method::CCA) {
            attempt(m, 0, "none", outcome_formula());
            continue;
        }
        for (SpecKind s : config.specs)
            attempt(m, static_cast<std::size_t>(s) + 1, std::string(spec_token(s)),
                    expand_formula(s, data.n_covariates(), false));
    }
    return out;
}

namespace {

SimulationResult gather(std::vector<IterationOutput>& parts) {
    SimulationResult out;
    double missing = 0.0;
    for (IterationOutput& p : parts) {
        out.records.insert(out.records.end(), p.records.begin(), p.records.end());
        out.failures.insert(out.failures.end(), p.failures.begin(), p.failures.end());
        missing += p.missing_fraction;
    }
    if (!parts.empty()) out.mean_missing_fraction = missing / static_cast<double>(parts.size());
    return out;
}

void check(const SimulationConfig& config) {
    check_config(config.scenario);
    if (config.iterations < 0 || config.first_iteration < 1) throw std::invalid_argument("invalid iteration range");
    if (config.threads < 1) throw std::invalid_argument("thread count must be positive");
}

}  // namespace

SimulationResult run_simulation_serial(const SimulationConfig& config) {
    check(config);
    std::vector<IterationOutput> parts;
    parts.reserve(static_cast<std::size_t>(config.iterations));
    for (int i = 0; i < config.iterations; ++i) parts.push_back(run_iteration(config, config.first_iteration + i));
    return gather(parts);
}

SimulationResult run_simulation(const SimulationConfig& config) {
    check(config);
    const int n = config.iterations;
    std::vector<IterationOutput> parts(static_cast<std::size_t>(n));
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.threads)
    for (int i = 0; i < n; ++i) {
        try {
            parts[static_cast<std::size_t>(i)] = run_iteration(config, config.first_iteration + i);
        } catch (...) {
#pragma omp critical(crt_harness_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return gather(parts);
}

}  // namespace crt
