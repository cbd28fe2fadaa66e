#include "crt/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crt/text.hpp"

namespace crt {
namespace {

constexpr const char* kRecordHeader =
    "iteration,method,spec,estimand,estimate,std_error,ci_low,ci_high,rejected_null,converged";

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string na(const std::optional<double>& v) { return v ? format_real(*v) : "NA"; }

Estimand parse_estimand(const std::string& s) {
    if (s == "HTE") return Estimand::HTE;
    if (s == "ATE") return Estimand::ATE;
    throw std::invalid_argument("unknown estimand '" + s + "'");
}

}  // namespace

void write_records(std::span<const IterationRecord> records, const std::string& path) {
    std::ofstream out = open_out(path);
    out << kRecordHeader << '\n';
    for (const IterationRecord& r : records) {
        out << r.iteration << ',' << method_name(r.method) << ',' << r.spec << ',' << estimand_name(r.estimand) << ','
            << format_real(r.estimate) << ',' << format_real(r.std_error) << ',' << format_real(r.ci_low) << ','
            << format_real(r.ci_high) << ',' << (r.rejected_null ? 1 : 0) << ',' << (r.converged ? 1 : 0) << '\n';
    }
    finish(out, path);
}

std::vector<IterationRecord> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line) != kRecordHeader)
        throw std::runtime_error("'" + path + "': unexpected records header");
    std::vector<IterationRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10)
            throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": expected 10 fields");
        try {
            IterationRecord r;
            r.iteration = parse_int(f[0]);
            r.method = parse_method(f[1]);
            r.spec = f[2];
            r.estimand = parse_estimand(f[3]);
            r.estimate = parse_real(f[4]);
            r.std_error = parse_real(f[5]);
            r.ci_low = parse_real(f[6]);
            r.ci_high = parse_real(f[7]);
            r.rejected_null = parse_int(f[8]) != 0;
            r.converged = parse_int(f[9]) != 0;
            out.push_back(std::move(r));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_failures(std::span<const FailureEntry> failures, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "iteration,method,spec,message\n";
    for (const FailureEntry& f : failures) {
        std::string msg = f.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        out << f.iteration << ',' << method_name(f.method) << ',' << f.spec << ',' << msg << '\n';
    }
    finish(out, path);
}

void write_metrics(std::span<const MetricRow> rows, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "method,spec,estimand,truth,n_records,n_converged,bias,mcse_bias,coverage,mcse_coverage,rejection_rate,"
           "mse,empirical_se,mean_se,cca_bias,cca_coverage,cca_mse,cca_rejection_rate\n";
    for (const MetricRow& r : rows) {
        out << method_name(r.method) << ',' << r.spec << ',' << estimand_name(r.estimand) << ',' << format_real(r.truth)
            << ',' << r.n_records << ',' << r.n_converged << ',' << na(r.bias) << ',' << na(r.mcse_bias) << ','
            << na(r.coverage) << ',' << na(r.mcse_coverage) << ',' << na(r.rejection_rate) << ',' << na(r.mse) << ','
            << na(r.empirical_se) << ',' << na(r.mean_se) << ',' << na(r.cca_bias) << ',' << na(r.cca_coverage) << ','
            << na(r.cca_mse) << ',' << na(r.cca_rejection_rate) << '\n';
    }
    finish(out, path);
}

std::string render_figure(std::span<const MetricRow> rows, Estimand estimand, const std::string& title) {
    const Method columns[] = {Method::SI, Method::MI, Method::MMI, Method::BMMI};
    struct Panel {
        const char* name;
        std::optional<double> MetricRow::*value;
        std::optional<double> MetricRow::*cca;
        double reference;
    };
    const Panel panels[] = {{"Bias", &MetricRow::bias, &MetricRow::cca_bias, 0.0},
                            {"Coverage", &MetricRow::coverage, &MetricRow::cca_coverage, 0.95},
                            {"MSE", &MetricRow::mse, &MetricRow::cca_mse, 0.0},
                            {"Rejection rate", &MetricRow::rejection_rate, &MetricRow::cca_rejection_rate, 0.05}};

    std::vector<std::string> specs;
    for (const MetricRow& r : rows)
        if (r.method != Method::CCA && r.estimand == estimand && std::find(specs.begin(), specs.end(), r.spec) == specs.end())
            specs.push_back(r.spec);

    const double pw = 200, ph = 140, left = 70, top = 50, gap = 30;
    const double width = left + 4 * (pw + gap), height = top + 4 * (ph + gap) + 20;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << " ("
        << estimand_name(estimand) << ")</text>\n";

    for (int pr = 0; pr < 4; ++pr) {
        const Panel& panel = panels[pr];
        // shared y range across the row
        double lo = panel.reference, hi = panel.reference;
        for (const MetricRow& r : rows) {
            if (r.estimand != estimand) continue;
            for (auto field : {panel.value, panel.cca})
                if ((r.*field)) {
                    lo = std::min(lo, *(r.*field));
                    hi = std::max(hi, *(r.*field));
                }
        }
        if (hi - lo < 1e-12) hi = lo + 1.0;
        const double pad = 0.08 * (hi - lo);
        lo -= pad;
        hi += pad;
        for (int pc = 0; pc < 4; ++pc) {
            const double x0 = left + pc * (pw + gap), y0 = top + pr * (ph + gap);
            auto ymap = [&](double v) { return y0 + ph - (v - lo) / (hi - lo) * ph; };
            svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
                << "\" fill=\"none\" stroke=\"#444\"/>\n";
            if (pr == 0)
                svg << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 6 << "\" text-anchor=\"middle\">"
                    << method_name(columns[pc]) << "</text>\n";
            if (pc == 0) {
                svg << "<text x=\"" << x0 - 50 << "\" y=\"" << y0 + ph / 2 << "\" transform=\"rotate(-90 " << x0 - 50
                    << ' ' << y0 + ph / 2 << ")\" text-anchor=\"middle\">" << panel.name << "</text>\n";
                svg << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">" << format_real(std::round(hi * 1000) / 1000)
                    << "</text>\n<text x=\"" << x0 - 4 << "\" y=\"" << y0 + ph << "\" text-anchor=\"end\">"
                    << format_real(std::round(lo * 1000) / 1000) << "</text>\n";
            }
            svg << "<line x1=\"" << x0 << "\" x2=\"" << x0 + pw << "\" y1=\"" << ymap(panel.reference) << "\" y2=\""
                << ymap(panel.reference) << "\" stroke=\"#bbb\"/>\n";

            const double step = specs.empty() ? pw : pw / static_cast<double>(specs.size());
            std::string path;
            for (std::size_t s = 0; s < specs.size(); ++s) {
                const double x = x0 + step * (static_cast<double>(s) + 0.5);
                if (pr == 3)
                    svg << "<text x=\"" << x << "\" y=\"" << y0 + ph + 12 << "\" text-anchor=\"middle\" font-size=\"8\">"
                        << specs[s] << "</text>\n";
                const MetricRow* row = find_metric(rows, columns[pc], specs[s], estimand);
                if (!row) continue;
                if (row->*panel.value) {
                    const double y = ymap(*(row->*panel.value));
                    svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"#1f5fa8\"/>\n";
                    path += (path.empty() ? "M" : " L") + format_real(x) + ' ' + format_real(y);
                }
                if (row->*panel.cca) {
                    const double y = ymap(*(row->*panel.cca));
                    svg << "<line x1=\"" << x - step / 2 << "\" x2=\"" << x + step / 2 << "\" y1=\"" << y << "\" y2=\""
                        << y << "\" stroke=\"#c0392b\" stroke-dasharray=\"4 2\"/>\n";
                }
            }
            if (!path.empty()) svg << "<path d=\"" << path << "\" fill=\"none\" stroke=\"#1f5fa8\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::string> write_figures(std::span<const MetricRow> rows, const std::string& dir, const std::string& title) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    for (Estimand e : {Estimand::HTE, Estimand::ATE}) {
        const std::string path = (std::filesystem::path(dir) / (std::string(estimand_name(e)) + ".svg")).string();
        std::ofstream out = open_out(path);
        out << render_figure(rows, e, title);
        finish(out, path);
        written.push_back(path);
    }
    return written;
}

void write_json(const nlohmann::json& value, const std::string& path) {
    std::ofstream out = open_out(path);
    out << value.dump(2) << '\n';
    finish(out, path);
}

}  // namespace crt
