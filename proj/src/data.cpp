#include "crt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "crt/text.hpp"

namespace crt {

std::size_t TrialData::n_missing() const {
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), std::uint8_t{0}));
}

void validate(const TrialData& data) {
    const std::size_t n = data.outcome.size();
    if (data.offsets.size() < 2 || data.offsets.front() != 0 || data.offsets.back() != n)
        throw std::invalid_argument("cluster offsets do not cover the individuals");
    if (data.cluster_label.size() != data.n_clusters())
        throw std::invalid_argument("cluster label count does not match cluster count");
    if (data.treatment.size() != n || data.modifier.size() != n || data.observed.size() != n ||
        data.cluster_index.size() != n || static_cast<std::size_t>(data.covariates.rows()) != n)
        throw std::invalid_argument("column lengths differ");
    if (data.covariate_names.size() != data.n_covariates())
        throw std::invalid_argument("covariate name count does not match covariate columns");

    for (std::size_t i = 0; i < data.n_clusters(); ++i) {
        const std::size_t lo = data.offsets[i], hi = data.offsets[i + 1];
        if (hi <= lo) throw std::invalid_argument("empty cluster");
        const int a = data.treatment[lo];
        for (std::size_t r = lo; r < hi; ++r) {
            if (data.cluster_index[r] != static_cast<int>(i))
                throw std::invalid_argument("cluster index disagrees with offsets");
            if (data.treatment[r] != a) throw std::invalid_argument("treatment varies within cluster");
        }
        if (a != 0 && a != 1) throw std::invalid_argument("treatment not binary");
    }
    for (std::size_t r = 0; r < n; ++r) {
        if (!std::isfinite(data.outcome[r])) throw std::invalid_argument("missing outcome");
        if (data.observed[r] > 1) throw std::invalid_argument("presence mask not binary");
        if (data.observed[r] && data.modifier[r] != 0 && data.modifier[r] != 1)
            throw std::invalid_argument("modifier not binary");
    }
    if (!data.covariates.allFinite()) throw std::invalid_argument("missing covariate");
}

TrialData make_trial(const TrialRows& rows) {
    const std::size_t n = rows.cluster_id.size();
    if (rows.treatment.size() != n || rows.outcome.size() != n || rows.modifier.size() != n ||
        static_cast<std::size_t>(rows.covariates.rows()) != n)
        throw std::invalid_argument("column lengths differ");

    std::vector<int> order_of_label;
    std::unordered_map<int, int> slot;
    for (int id : rows.cluster_id) {
        if (slot.emplace(id, static_cast<int>(order_of_label.size())).second) order_of_label.push_back(id);
    }
    std::vector<std::vector<std::size_t>> members(order_of_label.size());
    for (std::size_t r = 0; r < n; ++r) members[slot[rows.cluster_id[r]]].push_back(r);

    TrialData out;
    out.cluster_label = order_of_label;
    out.covariate_names = rows.covariate_names;
    if (out.covariate_names.empty()) {
        for (Eigen::Index k = 0; k < rows.covariates.cols(); ++k)
            out.covariate_names.push_back("x" + std::to_string(k + 1));
    }
    out.covariates.resize(static_cast<Eigen::Index>(n), rows.covariates.cols());
    out.offsets.push_back(0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t r : members[i]) {
            out.cluster_index.push_back(static_cast<int>(i));
            out.treatment.push_back(rows.treatment[r]);
            out.outcome.push_back(rows.outcome[r]);
            out.observed.push_back(rows.modifier[r].has_value() ? 1 : 0);
            out.modifier.push_back(rows.modifier[r].value_or(0));
            out.covariates.row(static_cast<Eigen::Index>(pos)) = rows.covariates.row(static_cast<Eigen::Index>(r));
            ++pos;
        }
        out.offsets.push_back(pos);
    }
    validate(out);
    return out;
}

TrialData with_modifier(const TrialData& data, std::span<const int> full) {
    if (full.size() != data.n_total()) throw std::invalid_argument("modifier length differs from N");
    TrialData out = data;
    out.modifier.assign(full.begin(), full.end());
    std::fill(out.observed.begin(), out.observed.end(), std::uint8_t{1});
    validate(out);
    return out;
}

TrialData with_mask(const TrialData& data, std::span<const std::uint8_t> observed) {
    if (observed.size() != data.n_total()) throw std::invalid_argument("mask length differs from N");
    TrialData out = data;
    out.observed.assign(observed.begin(), observed.end());
    validate(out);
    return out;
}

// ---------------------------------------------------------------------------

bool Term::uses(Variable v) const {
    return std::any_of(factors.begin(), factors.end(), [v](const Factor& f) { return f.var == v; });
}

std::string Term::label(std::span<const std::string> covariate_names) const {
    if (factors.empty()) return "1";
    std::string out;
    for (const Factor& f : factors) {
        if (!out.empty()) out += ':';
        switch (f.var) {
            case Variable::Treatment: out += 'A'; break;
            case Variable::Modifier: out += 'M'; break;
            case Variable::Outcome: out += 'Y'; break;
            case Variable::Covariate:
                out += static_cast<std::size_t>(f.covariate) < covariate_names.size()
                           ? covariate_names[static_cast<std::size_t>(f.covariate)]
                           : "X" + std::to_string(f.covariate + 1);
                break;
        }
    }
    return out;
}

bool Formula::uses(Variable v) const {
    return std::any_of(terms.begin(), terms.end(), [v](const Term& t) { return t.uses(v); });
}

std::vector<std::string> Formula::labels(std::span<const std::string> covariate_names) const {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const Term& t : terms) out.push_back(t.label(covariate_names));
    return out;
}

namespace term {
Factor A() { return {Variable::Treatment}; }
Factor M() { return {Variable::Modifier}; }
Factor Y() { return {Variable::Outcome}; }
Factor X(int k) { return {Variable::Covariate, k}; }
Term intercept() { return {}; }
Term of(std::initializer_list<Factor> factors) { return Term{std::vector<Factor>(factors)}; }
}  // namespace term

Formula outcome_formula() {
    using namespace term;
    return Formula{{intercept(), of({A()}), of({M()}), of({A(), M()})}, false};
}

void check_formula(const Formula& formula, std::size_t p) {
    if (formula.terms.empty() || !formula.terms.front().is_intercept())
        throw std::invalid_argument("first formula term must be the intercept");
    for (std::size_t a = 0; a < formula.terms.size(); ++a) {
        for (const Factor& f : formula.terms[a].factors) {
            if (f.var == Variable::Covariate && (f.covariate < 0 || static_cast<std::size_t>(f.covariate) >= p))
                throw std::invalid_argument("formula references a covariate not in the dataset");
        }
        for (std::size_t b = a + 1; b < formula.terms.size(); ++b) {
            if (formula.terms[a] == formula.terms[b]) throw std::invalid_argument("duplicate formula term");
        }
    }
}

DesignMatrix build_design(const Formula& formula, const TrialData& data,
                          std::optional<std::span<const int>> imputed_modifier) {
    check_formula(formula, data.n_covariates());
    const std::size_t n = data.n_total();
    const bool needs_m = formula.uses(Variable::Modifier);
    if (needs_m) {
        if (imputed_modifier) {
            if (imputed_modifier->size() != n) throw std::invalid_argument("imputed modifier length differs from N");
        } else if (!data.fully_observed()) {
            throw std::invalid_argument("formula references M with unresolved missing values");
        }
    }

    DesignMatrix out;
    out.column_labels = formula.labels(data.covariate_names);
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(formula.size()));
    for (std::size_t r = 0; r < n; ++r) {
        double m = 0.0;
        if (needs_m) m = data.observed[r] ? data.modifier[r] : (*imputed_modifier)[r];
        for (std::size_t t = 0; t < formula.size(); ++t) {
            double v = 1.0;
            for (const Factor& f : formula.terms[t].factors) {
                switch (f.var) {
                    case Variable::Treatment: v *= data.treatment[r]; break;
                    case Variable::Modifier: v *= m; break;
                    case Variable::Outcome: v *= data.outcome[r]; break;
                    case Variable::Covariate:
                        v *= data.covariates(static_cast<Eigen::Index>(r), f.covariate);
                        break;
                }
            }
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = v;
        }
    }
    return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& design, std::span<const std::uint8_t> mask) {
    const auto kept = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
    Eigen::MatrixXd out(kept, design.cols());
    Eigen::Index pos = 0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        if (mask[r]) out.row(pos++) = design.row(static_cast<Eigen::Index>(r));
    }
    return out;
}

// ---------------------------------------------------------------------------

TrialData read_trial_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header row");
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    const std::vector<std::string> fixed{"cluster_id", "treatment", "outcome", "modifier"};
    if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
        throw std::runtime_error(path + ": header must start with cluster_id,treatment,outcome,modifier");
    const std::size_t p = header.size() - fixed.size();

    TrialRows rows;
    rows.covariate_names.assign(header.begin() + 4, header.end());
    std::vector<double> cov;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields");
        try {
            rows.cluster_id.push_back(parse_int(fields[0]));
            rows.treatment.push_back(parse_int(fields[1]));
            const std::string y = trim(fields[2]);
            if (y.empty() || y == "NA") throw std::invalid_argument("missing outcome");
            rows.outcome.push_back(parse_real(y));
            const std::string m = trim(fields[3]);
            if (m.empty() || m == "NA") rows.modifier.emplace_back(std::nullopt);
            else rows.modifier.emplace_back(parse_int(m));
            for (std::size_t k = 0; k < p; ++k) {
                const std::string x = trim(fields[4 + k]);
                if (x.empty() || x == "NA") throw std::invalid_argument("missing covariate");
                cov.push_back(parse_real(x));
            }
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    rows.covariates = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cov.data(), static_cast<Eigen::Index>(rows.outcome.size()), static_cast<Eigen::Index>(p));
    return make_trial(rows);
}

void write_trial_csv(const TrialData& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "cluster_id,treatment,outcome,modifier";
    for (const auto& name : data.covariate_names) out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < data.n_total(); ++r) {
        out << data.cluster_label[static_cast<std::size_t>(data.cluster_index[r])] << ',' << data.treatment[r] << ','
            << format_real(data.outcome[r]) << ',';
        if (data.observed[r]) out << data.modifier[r];
        else out << "NA";
        for (Eigen::Index k = 0; k < data.covariates.cols(); ++k)
            out << ',' << format_real(data.covariates(static_cast<Eigen::Index>(r), k));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace crt
