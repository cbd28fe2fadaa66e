#include <doctest.h>

#include <stdexcept>

#include "crt/impute.hpp"
#include "fixtures.hpp"

using namespace crt;

TEST_CASE("imputation model sizes") {
    // p = 1: 4, 5, 5, 6, 8 terms; p = 3: 6, 7, 9, 10, 16 terms
    const std::size_t one[] = {4, 5, 5, 6, 8}, three[] = {6, 7, 9, 10, 16};
    int k = 0;
    for (SpecKind s : kAllSpecs) {
        CHECK(expand_formula(s, 1).size() == one[k]);
        CHECK(expand_formula(s, 3).size() == three[k]);
        CHECK(parse_spec(spec_token(s)) == s);
        ++k;
    }
    CHECK(all_two_way_formula(2).size() == 11);
    CHECK(expand_formula(SpecKind::ThreeWay, 3).labels(std::vector<std::string>{"x1", "x2", "x3"}).back() == "x3:A:Y");
    CHECK(expand_formula(SpecKind::MainEffects, 1, true).has_random_intercept);
    CHECK_THROWS_AS(parse_spec("cubic"), std::invalid_argument);
}

TEST_CASE("completions keep observed values") {
    const TrialData d = fixture::random_trial(20, 15, 1, 0.3, 3);
    ImputationSpec spec;
    spec.kind = SpecKind::XxA_YxA;
    spec.imputations = 4;
    RngStream rng(1);
    const MultipleImputation mi = multiple_impute(d, spec, rng);
    REQUIRE(mi.datasets.size() == 4);
    CHECK(mi.model.missing_rows.size() == d.n_missing());
    for (const auto& ds : mi.datasets)
        for (std::size_t r = 0; r < d.n_total(); ++r) {
            if (d.observed[r]) CHECK(ds.modifier[r] == d.modifier[r]);
            CHECK((ds.modifier[r] == 0 || ds.modifier[r] == 1));
        }
}

TEST_CASE("D = 1 single-level multiple imputation is single imputation") {
    const TrialData d = fixture::random_trial(20, 15, 1, 0.3, 4);
    ImputationSpec spec;
    spec.kind = SpecKind::ThreeWay;
    spec.imputations = 1;
    RngStream a(99), b(99);
    CHECK(single_impute(d, spec, a).modifier == multiple_impute(d, spec, b).datasets.front().modifier);
}

TEST_CASE("missing-entry probabilities match the fitted model") {
    const TrialData d = fixture::random_trial(24, 20, 2, 0.25, 5);
    const Formula f = expand_formula(SpecKind::AxY, 2, true);
    const ImputationModel m = fit_imputation_model(d, f);
    const DesignMatrix x = build_design(f, d);
    for (std::size_t k = 0; k < m.missing_rows.size(); ++k) {
        const auto r = m.missing_rows[k];
        const double lp = x.values.row(static_cast<Eigen::Index>(r)).dot(m.fit.eta) + m.fit.alpha_hat[d.cluster_index[r]];
        CHECK(m.missing_prob[k] == doctest::Approx(expit(lp)).epsilon(1e-14));
    }
}

TEST_CASE("imputation models cannot use M and fail cleanly") {
    using namespace term;
    const TrialData d = fixture::random_trial(6, 5, 1, 0.3, 6);
    const Formula bad{{intercept(), of({M()})}, false};
    CHECK_THROWS_AS(fit_imputation_model(d, bad), std::invalid_argument);

    std::vector<std::uint8_t> none(d.n_total(), 0);
    const TrialData empty = with_mask(d, none);
    CHECK_THROWS_AS(fit_imputation_model(empty, expand_formula(SpecKind::MainEffects, 1)), ImputationFailure);
}

TEST_CASE("zero missing entries give the observed data back") {
    const TrialData d = fixture::random_trial(10, 8, 1, 0.0, 7);
    ImputationSpec spec;
    spec.imputations = 3;
    RngStream rng(2);
    for (const auto& ds : multiple_impute(d, spec, rng).datasets) CHECK(ds.modifier == d.modifier);
}
