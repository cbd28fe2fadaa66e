#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "crt/analysis.hpp"
#include "fixtures.hpp"

using namespace crt;

TEST_CASE("ATE from a fit") {
    GeeFit fit;
    fit.gamma = Eigen::Vector4d(0.0, 1.0, 0.0, 0.0);
    fit.robust_cov = Eigen::Matrix4d::Identity() * 0.04;
    fit.robust_cov(1, 1) = 0.09;
    PointEstimate a = ate_estimate(fit, 0.3);
    CHECK(a.estimate == 1.0);
    CHECK(a.std_error == doctest::Approx(std::sqrt(0.09 + 0.3 * 0.3 * 0.04)));
    fit.gamma = Eigen::Vector4d(0.0, 1.0, 0.0, 2.0);
    CHECK(ate_estimate(fit, 0.5).estimate == 2.0);
}

TEST_CASE("delta-method ATE agrees with the centered refit") {
    const TrialData d = fixture::random_trial(30, 15, 1, 0.0, 21);
    GeeOptions opts;
    for (auto kind : {CorrelationKind::Exchangeable, CorrelationKind::Independence}) {
        opts.kind = kind;
        const CompletedAnalysis a = analyze_completed(d, d.modifier, opts);
        const PointEstimate c = centered_ate(d, d.modifier, opts);
        CHECK(a.ate.estimate == doctest::Approx(c.estimate).epsilon(1e-8));
        CHECK(std::fabs(a.ate.std_error - c.std_error) <= 1e-6);
    }
    // complete cases only
    const TrialData m = fixture::random_trial(30, 15, 1, 0.3, 22);
    AnalysisOptions ao;
    RngStream rng(1);
    const MethodResult cca = run_method(Method::CCA, m, outcome_formula(), ao, rng);
    const PointEstimate c = centered_ate(m, observed_only(m).modifier, ao.gee, m.observed);
    CHECK(cca.ate.estimate == doctest::Approx(c.estimate).epsilon(1e-8));
    CHECK(std::fabs(cca.ate.std_error - c.std_error) <= 1e-6);
}

TEST_CASE("CCA equals GEE on the observed rows") {
    const TrialData d = fixture::random_trial(20, 12, 1, 0.3, 23);
    AnalysisOptions ao;
    RngStream rng(1);
    const MethodResult r = run_method(Method::CCA, d, outcome_formula(), ao, rng);
    const GeeFit direct = fit_gee(d, outcome_formula(), ao.gee, d.observed);
    CHECK(r.hte.estimate == direct.gamma[3]);
    CHECK(r.hte.std_error == direct.robust_se(3));
    CHECK(std::isinf(r.hte.nu_adj));
}

TEST_CASE("every method reproduces the complete-data fit without missingness") {
    const TrialData d = fixture::random_trial(16, 10, 1, 0.0, 24);
    AnalysisOptions ao;
    ao.gibbs.burnin = 20;
    ao.gibbs.thin = 2;
    const MethodResult full = complete_data_result(d, d.modifier, ao);
    for (Method m : kAllMethods) {
        CAPTURE(method_name(m));
        RngStream rng(5);
        const MethodResult r = run_method(m, d, expand_formula(SpecKind::ThreeWay, 1), ao, rng);
        CHECK(std::fabs(r.hte.estimate - full.hte.estimate) <= 1e-8);
        CHECK(std::fabs(r.ate.estimate - full.ate.estimate) <= 1e-8);
        CHECK(r.hte.between_var == 0.0);
        CHECK(r.ate.between_var == 0.0);
    }
}

TEST_CASE("method tokens") {
    for (Method m : kAllMethods) {
        CHECK(parse_method(method_token(m)) == m);
        CHECK(parse_method(method_name(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("ipw"), std::invalid_argument);
}

TEST_CASE("t-based Wald intervals use clusters with complete cases") {
    const TrialData full = fixture::random_trial(10, 6, 1, 0.2, 25);
    std::vector<std::uint8_t> mask = full.observed;
    for (std::size_t r = full.offsets[0]; r < full.offsets[1]; ++r) mask[r] = 0;
    const TrialData d = with_mask(full, mask);
    CHECK(parse_wald_reference("t") == WaldReference::T);
    CHECK(wald_reference_token(WaldReference::Normal) == "normal");
    AnalysisOptions ao;
    ao.wald = WaldReference::T;
    RngStream rng(1);
    const MethodResult cca = run_method(Method::CCA, d, outcome_formula(), ao, rng);
    CHECK((cca.hte.ci_high - cca.hte.estimate) / cca.hte.std_error == doctest::Approx(t_critical(5.0, 0.95)));
    const MethodResult comp = complete_data_result(full, full.modifier, ao);
    CHECK((comp.ate.ci_high - comp.ate.estimate) / comp.ate.std_error == doctest::Approx(t_critical(6.0, 0.95)));
    ao.wald = WaldReference::Normal;
    const MethodResult z = complete_data_result(full, full.modifier, ao);
    CHECK((z.ate.ci_high - z.ate.estimate) / z.ate.std_error == doctest::Approx(1.959963984540054));
}
