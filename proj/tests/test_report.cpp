#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crt/report.hpp"

using namespace crt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "crt_report_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("empty record list writes a header-only file") {
    const auto path = scratch("empty.csv").string();
    write_records({}, path);
    CHECK(slurp(path) == "iteration,method,spec,estimand,estimate,std_error,ci_low,ci_high,rejected_null,converged\n");
    CHECK(read_records(path).empty());
}

TEST_CASE("records round-trip exactly") {
    std::vector<IterationRecord> in;
    for (int k = 1; k <= 4; ++k) {
        IterationRecord r;
        r.iteration = k;
        r.method = kAllMethods[k % 5];
        r.spec = k % 5 == 0 ? "none" : "xxa-yxa";
        r.estimand = k % 2 ? Estimand::HTE : Estimand::ATE;
        r.estimate = 1.0 / (3.0 * k);
        r.std_error = 0.1 * k + 1e-17;
        r.ci_low = -std::sqrt(2.0) * k;
        r.ci_high = 1e300;
        r.rejected_null = k % 2;
        r.converged = k != 3;
        in.push_back(r);
    }
    const auto path = scratch("records.csv").string();
    write_records(in, path);
    const auto out = read_records(path);
    REQUIRE(out.size() == in.size());
    for (std::size_t k = 0; k < in.size(); ++k) {
        CHECK(out[k].iteration == in[k].iteration);
        CHECK(out[k].method == in[k].method);
        CHECK(out[k].spec == in[k].spec);
        CHECK(out[k].estimand == in[k].estimand);
        CHECK(out[k].estimate == in[k].estimate);
        CHECK(out[k].std_error == in[k].std_error);
        CHECK(out[k].ci_low == in[k].ci_low);
        CHECK(out[k].ci_high == in[k].ci_high);
        CHECK(out[k].rejected_null == in[k].rejected_null);
        CHECK(out[k].converged == in[k].converged);
    }
    write_records(out, scratch("records2.csv").string());
    CHECK(slurp(path) == slurp(scratch("records2.csv").string()));
}

TEST_CASE("bad inputs name the file") {
    std::ofstream(scratch("bad.csv")) << "nope\n";
    CHECK_THROWS_WITH_AS(read_records(scratch("bad.csv").string()),
                         doctest::Contains("bad.csv"), std::runtime_error);
    CHECK_THROWS_AS(write_records({}, "/nonexistent-dir/x.csv"), std::runtime_error);
}

TEST_CASE("metrics and figures") {
    MetricRow a;
    a.method = Method::SI;
    a.spec = "main";
    a.bias = 0.1;
    a.coverage = 0.9;
    a.mse = 0.02;
    a.rejection_rate = 0.1;
    a.cca_bias = 0.05;
    MetricRow b = a;
    b.method = Method::BMMI;
    b.spec = "threeway";
    MetricRow empty;
    empty.method = Method::MI;
    empty.spec = "main";
    const std::vector<MetricRow> rows{a, b, empty};
    const auto path = scratch("metrics.csv").string();
    write_metrics(rows, path);
    const std::string text = slurp(path);
    CHECK(text.find("SI,main,HTE,0,0,0,0.10000000000000001,NA") != std::string::npos);
    CHECK(text.find("MI,main,HTE,0,0,0,NA,NA") != std::string::npos);

    const std::string svg = render_figure(rows, Estimand::HTE, "demo");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find(">Coverage<") != std::string::npos);
    CHECK(svg.find(">BMMI<") != std::string::npos);
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
    const auto files = write_figures(rows, scratch("fig").string(), "demo");
    CHECK(files.size() == 2);
    for (const auto& f : files) CHECK(fs::exists(f));
}
