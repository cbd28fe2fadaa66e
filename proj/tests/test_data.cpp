#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <limits>

#include "crt/data.hpp"
#include "crt/text.hpp"
#include "fixtures.hpp"

using namespace crt;

TEST_CASE("format_real round-trips exactly") {
    for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0, 12345.678901234567}) {
        CHECK(parse_real(format_real(v)) == v);
    }
    CHECK(std::isnan(parse_real("nan")));
    CHECK_THROWS_AS(parse_real("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_int("2.5"), std::invalid_argument);
    CHECK(split_csv_line("a,b,,c\r") == std::vector<std::string>{"a", "b", "", "c"});
}

TEST_CASE("make_trial groups rows by first appearance of the cluster id") {
    TrialRows rows;
    rows.cluster_id = {7, 3, 7, 3, 9};
    rows.treatment = {1, 0, 1, 0, 1};
    rows.outcome = {1, 2, 3, 4, 5};
    rows.modifier = {1, std::nullopt, 0, 1, 1};
    rows.covariates = Eigen::MatrixXd::Zero(5, 1);
    const TrialData d = make_trial(rows);
    CHECK(d.n_clusters() == 3);
    CHECK(d.cluster_label == std::vector<int>{7, 3, 9});
    CHECK(d.offsets == std::vector<std::size_t>{0, 2, 4, 5});
    CHECK(d.outcome == std::vector<double>{1, 3, 2, 4, 5});
    CHECK(d.n_missing() == 1);
    CHECK(d.observed[2] == 0);
    CHECK(d.covariate_names == std::vector<std::string>{"x1"});
}

TEST_CASE("validation rejects malformed trials") {
    TrialRows rows;
    rows.cluster_id = {1, 1, 2};
    rows.treatment = {1, 0, 0};
    rows.outcome = {1, 2, 3};
    rows.modifier = {1, 0, 1};
    rows.covariates = Eigen::MatrixXd::Zero(3, 1);
    CHECK_THROWS_WITH_AS(make_trial(rows), "treatment varies within cluster", std::invalid_argument);

    rows.treatment = {1, 1, 0};
    rows.modifier = {1, 2, 1};
    CHECK_THROWS_WITH_AS(make_trial(rows), "modifier not binary", std::invalid_argument);

    rows.modifier = {1, 0, 1};
    rows.outcome[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(make_trial(rows), "missing outcome", std::invalid_argument);

    rows.outcome[1] = 2.0;
    rows.covariates(2, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(make_trial(rows), "missing covariate", std::invalid_argument);
}

TEST_CASE("design matrix evaluates interaction terms") {
    using namespace term;
    const TrialData d = fixture::toy_trial();
    const Formula f{{intercept(), of({A()}), of({X(0), Y()}), of({X(0), A(), Y()})}, false};
    const DesignMatrix m = build_design(f, d);
    CHECK(m.column_labels == std::vector<std::string>{"1", "A", "x1:Y", "x1:A:Y"});
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        const auto rr = static_cast<std::size_t>(r);
        CHECK(m.values(r, 0) == 1.0);
        CHECK(m.values(r, 1) == d.treatment[rr]);
        CHECK(m.values(r, 2) == doctest::Approx(d.covariates(r, 0) * d.outcome[rr]));
        CHECK(m.values(r, 3) == doctest::Approx(d.covariates(r, 0) * d.treatment[rr] * d.outcome[rr]));
    }
}

TEST_CASE("design over M needs the missing entries resolved") {
    std::vector<std::uint8_t> mask(9, 1);
    mask[4] = 0;
    const TrialData d = with_mask(fixture::toy_trial(), mask);
    CHECK_THROWS_WITH_AS(build_design(outcome_formula(), d), "formula references M with unresolved missing values",
                         std::invalid_argument);
    std::vector<int> imputed(9, 1);
    const DesignMatrix m = build_design(outcome_formula(), d, imputed);
    CHECK(m.values(4, 2) == 1.0);
    CHECK(m.values(0, 2) == d.modifier[0]);  // observed entries come from the data
}

TEST_CASE("formula checks") {
    using namespace term;
    CHECK_THROWS_AS(check_formula(Formula{{of({A()})}, false}, 1), std::invalid_argument);
    CHECK_THROWS_AS(check_formula(Formula{{intercept(), of({A()}), of({A()})}, false}, 1), std::invalid_argument);
    CHECK_THROWS_AS(check_formula(Formula{{intercept(), of({X(2)})}, false}, 2), std::invalid_argument);
    CHECK_NOTHROW(check_formula(outcome_formula(), 0));
}

TEST_CASE("trial CSV round trip keeps missing markers and exact values") {
    const TrialData d = fixture::random_trial(6, 5, 2, 0.3, 11);
    const auto path = (std::filesystem::temp_directory_path() / "crt_trial_roundtrip.csv").string();
    write_trial_csv(d, path);
    const TrialData back = read_trial_csv(path);
    CHECK(back.offsets == d.offsets);
    CHECK(back.outcome == d.outcome);
    CHECK(back.observed == d.observed);
    CHECK(back.covariates == d.covariates);
    for (std::size_t r = 0; r < d.n_total(); ++r)
        if (d.observed[r]) CHECK(back.modifier[r] == d.modifier[r]);
    std::filesystem::remove(path);
}
