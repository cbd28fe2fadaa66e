#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crt/analysis.hpp"
#include "crt/dgm.hpp"
#include "crt/harness.hpp"
#include "crt/metrics.hpp"
#include "crt/polya_gamma.hpp"
#include "crt/report.hpp"
#include "crt/text.hpp"
#include "crt/version.hpp"
#include "crt/wfhs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (std::string& f : crt::split_csv_line(s)) {
        f = crt::trim(f);
        if (!f.empty()) out.push_back(f);
    }
    return out;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream s;
    s << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

double parse_beta3(const std::string& s) {
    if (s == "null") return 0.0;
    if (s == "nonnull") return crt::kNonNullBeta3;
    return crt::parse_real(s);
}

crt::CorrelationKind parse_working(const std::string& s) {
    if (s == "exchangeable") return crt::CorrelationKind::Exchangeable;
    if (s == "independence") return crt::CorrelationKind::Independence;
    throw std::invalid_argument("unknown working correlation '" + s + "'");
}

// Options shared by simulate and wfhs.
struct AnalysisFlags {
    std::string methods = "cca,si,mi,mmi,bmmi";
    std::string tau_update = "standard";
    std::string nu_obs = "standard";
    std::string working = "exchangeable";
    std::string wald = "normal";
    int imputations = 15;
    int burnin = 1000;
    int thin = 100;
    int quadrature_nodes = 15;
    std::string trace;

    void attach(CLI::App* app) {
        app->add_option("--methods", methods, "Comma-separated subset of cca,si,mi,mmi,bmmi")->capture_default_str();
        app->add_option("--tau-update", tau_update, "standard | literal")->capture_default_str();
        app->add_option("--nu-obs", nu_obs, "standard | literal")->capture_default_str();
        app->add_option("--working", working, "exchangeable | independence")->capture_default_str();
        app->add_option("--wald", wald, "Reference for CCA/SI intervals: normal | t (C - q df)")->capture_default_str();
        app->add_option("--imputations", imputations, "Completed datasets per multiple-imputation method")
            ->capture_default_str();
        app->add_option("--burnin", burnin, "Gibbs burn-in sweeps")->capture_default_str();
        app->add_option("--thin", thin, "Gibbs thinning interval")->capture_default_str();
        app->add_option("--quadrature-nodes", quadrature_nodes, "Adaptive Gauss-Hermite nodes (1 = Laplace)")
            ->capture_default_str();
    }

    std::vector<crt::Method> method_list() const {
        std::vector<crt::Method> out;
        for (const auto& t : split_list(methods)) out.push_back(crt::parse_method(t));
        return out;
    }

    crt::AnalysisOptions options() const {
        crt::AnalysisOptions o;
        o.gee.kind = parse_working(working);
        o.imputations = imputations;
        o.nu_obs = crt::parse_nu_obs(nu_obs);
        o.wald = crt::parse_wald_reference(wald);
        o.glmm.quadrature_nodes = quadrature_nodes;
        o.gibbs.burnin = burnin;
        o.gibbs.thin = thin;
        o.gibbs.tau_update = crt::parse_tau_update(tau_update);
        return o;
    }

    json echo() const {
        return {{"methods", methods},   {"tau_update", tau_update}, {"nu_obs", nu_obs},
                {"working", working},   {"wald", wald}, {"imputations", imputations}, {"burnin", burnin},
                {"thin", thin},         {"quadrature_nodes", quadrature_nodes}};
    }
};

json failure_counts(const std::vector<crt::FailureEntry>& failures) {
    json counts = json::object();
    for (const auto& f : failures) {
        const std::string key = std::string(crt::method_name(f.method)) + "/" + f.spec;
        counts[key] = counts.value(key, 0) + 1;
    }
    return counts;
}

int run_simulate(int scenario, std::size_t clusters, const std::string& beta3, const std::string& specs,
                 int iterations, int first_iteration, int threads, std::uint64_t seed_base, const std::string& out_dir,
                 bool no_mask, const AnalysisFlags& flags) {
    crt::SimulationConfig cfg;
    cfg.scenario.scenario = scenario;
    cfg.scenario.clusters = clusters;
    cfg.scenario.beta3 = parse_beta3(beta3);
    cfg.scenario.mask = !no_mask;
    cfg.methods = flags.method_list();
    cfg.specs.clear();
    for (const auto& t : split_list(specs)) cfg.specs.push_back(crt::parse_spec(t));
    cfg.iterations = iterations;
    cfg.first_iteration = first_iteration;
    cfg.threads = threads;
    cfg.seed_base = seed_base;
    cfg.analysis = flags.options();

    fs::create_directories(out_dir);
    const std::string started = utc_now();
    const crt::SimulationResult result = crt::run_simulation(cfg);
    const crt::TrueEstimands truth = crt::true_estimands(cfg.scenario);
    const auto metrics = crt::compute_metrics(result.records, {truth.gamma3, truth.ate});

    const fs::path dir(out_dir);
    crt::write_records(result.records, (dir / "records.csv").string());
    crt::write_metrics(metrics, (dir / "metrics.csv").string());
    crt::write_failures(result.failures, (dir / "failures.csv").string());
    std::ostringstream title;
    title << "Scenario " << scenario << ", C = " << clusters << ", beta3 = " << crt::format_real(cfg.scenario.beta3);
    crt::write_figures(metrics, (dir / "figures").string(), title.str());

    json meta;
    meta["command"] = "simulate";
    meta["version"] = std::string(crt::kVersion);
    meta["config"] = {{"scenario", scenario},
                      {"clusters", clusters},
                      {"beta3", cfg.scenario.beta3},
                      {"specs", specs},
                      {"iterations", iterations},
                      {"first_iteration", first_iteration},
                      {"threads", threads},
                      {"mask", !no_mask},
                      {"analysis", flags.echo()}};
    meta["seeds"] = {{"seed_base", seed_base},
                     {"data_seed", "seed_base * k"},
                     {"method_stream", "derived(seed_base * k, method, spec)"}};
    meta["truth"] = {{"hte", truth.gamma3},
                     {"ate", truth.ate},
                     {"e_m", truth.e_m},
                     {"reported_ate_rounded", cfg.scenario.beta3 == 0.0 ? 1.0 : 0.0},
                     {"note", "ATE truth uses E(M) of the latent-intercept model; the rounded value is shown for "
                              "comparison only"}};
    meta["mean_missing_fraction"] = result.mean_missing_fraction;
    meta["records"] = result.records.size();
    meta["failures"] = result.failures.size();
    meta["failure_counts"] = failure_counts(result.failures);
    meta["started"] = started;
    meta["finished"] = utc_now();
    crt::write_json(meta, (dir / "run-meta.json").string());

    std::cout << "records: " << result.records.size() << ", aborted method runs: " << result.failures.size()
              << ", mean missing fraction: " << result.mean_missing_fraction << "\n";
    for (const auto& row : metrics) {
        if (!row.bias) continue;
        std::cout << std::left << std::setw(5) << crt::method_name(row.method) << ' ' << std::setw(9) << row.spec << ' '
                  << crt::estimand_name(row.estimand) << std::fixed << std::setprecision(4) << "  bias " << *row.bias
                  << "  cov " << *row.coverage << "  rej " << *row.rejection_rate << "  mse " << *row.mse << '\n';
        std::cout.unsetf(std::ios::fixed);
    }
    return 0;
}

int run_wfhs(const std::string& data_path, crt::WfhsConfig cfg, const std::string& out_dir, const AnalysisFlags& flags) {
    cfg.methods = flags.method_list();
    cfg.analysis = flags.options();
    const crt::TrialData prepared = crt::prepare_wfhs(crt::read_trial_csv(data_path), cfg);

    fs::create_directories(out_dir);
    const std::string started = utc_now();
    const crt::WfhsResult result = crt::wfhs_replicate(prepared, cfg);
    const fs::path dir(out_dir);
    crt::write_records(result.records, (dir / "records.csv").string());
    crt::write_failures(result.failures, (dir / "failures.csv").string());
    crt::write_wfhs_summary(result.summary, (dir / "summary.csv").string());

    double missing = 0.0;
    for (double m : result.missing_fraction) missing += m;
    missing /= static_cast<double>(result.missing_fraction.size());

    json meta;
    meta["command"] = "wfhs";
    meta["version"] = std::string(crt::kVersion);
    meta["config"] = {{"data", data_path},
                      {"scenario", cfg.scenario},
                      {"replications", cfg.replications},
                      {"threads", cfg.threads},
                      {"control_column", cfg.control_column},
                      {"autonomy_column", cfg.autonomy_column},
                      {"threshold", cfg.threshold},
                      {"analysis", flags.echo()}};
    meta["seeds"] = {{"seed_base", cfg.seed_base}, {"mask_seed", "seed_base * r"}};
    meta["individuals"] = prepared.n_total();
    meta["clusters"] = prepared.n_clusters();
    meta["mean_missing_fraction"] = missing;
    meta["failure_counts"] = failure_counts(result.failures);
    meta["started"] = started;
    meta["finished"] = utc_now();
    crt::write_json(meta, (dir / "run-meta.json").string());

    std::cout << "mean missing fraction: " << missing << "\n";
    for (const auto& r : result.summary)
        std::cout << std::left << std::setw(9) << r.method << ' ' << crt::estimand_name(r.estimand) << "  est "
                  << r.mean_estimate << "  CI [" << r.mean_ci_low << ", " << r.mean_ci_high << "]  narrower "
                  << r.pct_narrower << "%  covers " << r.pct_cover_complete << "%  dropped " << r.n_dropped << '\n';
    return 0;
}

int run_pg_check(long draws, std::uint64_t seed) {
    crt::RngStream rng(seed);
    std::cout << "c,mean_theory,mean_empirical,z_mean,var_theory,var_empirical\n";
    int bad = 0;
    for (double c : {0.0, 0.5, 1.0, 2.0, 4.0, 10.0}) {
        double s = 0.0, s2 = 0.0;
        for (long k = 0; k < draws; ++k) {
            const double w = crt::pg_sample(1, c, rng);
            s += w;
            s2 += w * w;
        }
        const double n = static_cast<double>(draws);
        const double mean = s / n, var = s2 / n - mean * mean;
        const double z = (mean - crt::pg_mean(1, c)) / std::sqrt(crt::pg_variance(1, c) / n);
        if (std::fabs(z) > 4.0) ++bad;
        std::cout << c << ',' << crt::pg_mean(1, c) << ',' << mean << ',' << z << ',' << crt::pg_variance(1, c) << ','
                  << var << '\n';
    }
    return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous treatment effect estimation with a missing effect modifier in cluster-randomized trials"};
    app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(crt::kVersion));

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the simulation grid for one scenario");
    int scenario = 1, iterations = 200, first_iteration = 1, threads = 1;
    std::size_t clusters = 100;
    std::string beta3 = "null", specs = "main,axy,xxa,xxa-yxa,threeway", out_dir = "out";
    std::uint64_t seed_base = 1000;
    bool no_mask = false;
    AnalysisFlags sim_flags;
    sim->add_option("--scenario", scenario, "1 | 2")->capture_default_str()->check(CLI::IsMember({1, 2}));
    sim->add_option("--clusters", clusters, "Number of clusters (even)")->capture_default_str();
    sim->add_option("--beta3", beta3, "null | nonnull | numeric value")->capture_default_str();
    sim->add_option("--specs", specs, "Comma-separated subset of main,axy,xxa,xxa-yxa,threeway")->capture_default_str();
    sim->add_option("--iterations", iterations)->capture_default_str();
    sim->add_option("--first-iteration", first_iteration, "Index k of the first iteration")->capture_default_str();
    sim->add_option("--threads", threads)->capture_default_str();
    sim->add_option("--seed-base", seed_base, "Iteration k uses seed seed_base * k")->capture_default_str();
    sim->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sim->add_flag("--no-mask", no_mask, "Diagnostic run without missingness");
    sim_flags.attach(sim);

    // wfhs
    auto* wf = app.add_subcommand("wfhs", "Replication protocol with imposed missingness on a complete dataset");
    std::string wf_data, wf_out = "out-wfhs";
    crt::WfhsConfig wf_cfg;
    AnalysisFlags wf_flags;
    wf->add_option("--data", wf_data, "Trial CSV with a fully observed modifier")->required();
    wf->add_option("--scenario", wf_cfg.scenario, "0 (none) | 1 | 2 | 3")->capture_default_str()->check(CLI::Range(0, 3));
    wf->add_option("--replications", wf_cfg.replications)->capture_default_str();
    wf->add_option("--threads", wf_cfg.threads)->capture_default_str();
    wf->add_option("--seed-base", wf_cfg.seed_base)->capture_default_str();
    wf->add_option("--control-col", wf_cfg.control_column, "Covariate column for control of schedule")->capture_default_str();
    wf->add_option("--autonomy-col", wf_cfg.autonomy_column, "Covariate column for job autonomy")->capture_default_str();
    wf->add_option("--threshold", wf_cfg.threshold, "Dichotomization cut point (>=)")->capture_default_str();
    wf->add_option("--out", wf_out)->capture_default_str();
    wf_flags.attach(wf);

    // pg-check
    auto* pg = app.add_subcommand("pg-check", "Compare Polya-Gamma draws with the exact moments");
    long pg_draws = 100000;
    std::uint64_t pg_seed = 1;
    pg->add_option("--draws", pg_draws)->capture_default_str();
    pg->add_option("--seed", pg_seed)->capture_default_str();

    // oracle-em
    auto* em = app.add_subcommand("oracle-em", "Monte Carlo value of E(M) and the implied ATE truth");
    std::size_t em_draws = 10'000'000;
    std::uint64_t em_seed = 20240101;
    em->add_option("--draws", em_draws)->capture_default_str();
    em->add_option("--seed", em_seed)->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "Write one simulated trial to CSV");
    int gen_k = 1;
    std::string gen_out = "trial.csv";
    crt::ScenarioConfig gen_cfg;
    std::string gen_beta3 = "null";
    gen->add_option("--scenario", gen_cfg.scenario)->capture_default_str()->check(CLI::IsMember({1, 2}));
    gen->add_option("--clusters", gen_cfg.clusters)->capture_default_str();
    gen->add_option("--beta3", gen_beta3)->capture_default_str();
    gen->add_option("--iteration", gen_k, "Uses seed seed_base * k")->capture_default_str();
    gen->add_option("--seed-base", seed_base)->capture_default_str();
    gen->add_option("--out", gen_out)->capture_default_str();

    // make-standin
    auto* standin = app.add_subcommand("make-standin", "Write the synthetic replication dataset");
    std::uint64_t standin_seed = 2016;
    std::string standin_out = "wfhs-standin.csv";
    standin->add_option("--seed", standin_seed)->capture_default_str();
    standin->add_option("--out", standin_out)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim)
            return run_simulate(scenario, clusters, beta3, specs, iterations, first_iteration, threads, seed_base,
                                out_dir, no_mask, sim_flags);
        if (*wf) return run_wfhs(wf_data, wf_cfg, wf_out, wf_flags);
        if (*pg) return run_pg_check(pg_draws, pg_seed);
        if (*em) {
            const double e_m = crt::modifier_prevalence_mc(em_draws, em_seed);
            std::cout << std::setprecision(17) << "e_m_monte_carlo," << e_m << "\ne_m_quadrature,"
                      << crt::kModifierPrevalence << "\nate_true_nonnull," << 1.0 + crt::kNonNullBeta3 * e_m << '\n';
            return 0;
        }
        if (*gen) {
            gen_cfg.beta3 = parse_beta3(gen_beta3);
            crt::RngStream rng(seed_base * static_cast<std::uint64_t>(gen_k));
            const crt::GeneratedTrial t = crt::generate(gen_cfg, rng);
            crt::write_trial_csv(t.data, gen_out);
            std::cout << "N = " << t.data.n_total() << ", missing fraction " << t.missing_fraction << '\n';
            return 0;
        }
        if (*standin) {
            const crt::TrialData d = crt::make_wfhs_standin(standin_seed);
            crt::write_trial_csv(d, standin_out);
            std::cout << "N = " << d.n_total() << " in " << d.n_clusters() << " sites\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "crt-hte: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
