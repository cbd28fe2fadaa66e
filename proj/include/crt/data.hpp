#ifndef CRT_DATA_HPP
#define CRT_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crt {

/// One cluster-randomized trial in columnar layout.
///
/// Individuals are stored cluster-contiguously; `offsets` has C + 1 entries
/// and cluster i occupies rows [offsets[i], offsets[i+1]). The modifier is
/// paired with an explicit presence mask: `modifier[r]` is meaningful only
/// when `observed[r] == 1`.
struct TrialData {
    std::vector<int> cluster_label;      // per cluster, original id
    std::vector<std::size_t> offsets;    // C + 1
    std::vector<int> cluster_index;      // per individual, 0..C-1
    std::vector<int> treatment;          // per individual, constant within cluster
    std::vector<double> outcome;
    std::vector<int> modifier;
    std::vector<std::uint8_t> observed;
    Eigen::MatrixXd covariates;          // N x p
    std::vector<std::string> covariate_names;

    std::size_t n_clusters() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t n_total() const { return outcome.size(); }
    std::size_t n_covariates() const { return static_cast<std::size_t>(covariates.cols()); }
    std::size_t cluster_size(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
    int cluster_treatment(std::size_t i) const { return treatment[offsets[i]]; }
    std::size_t n_missing() const;
    bool fully_observed() const { return n_missing() == 0; }
};

/// Per-individual input rows in arbitrary order; `make_trial` groups them.
struct TrialRows {
    std::vector<int> cluster_id;
    std::vector<int> treatment;
    std::vector<double> outcome;
    std::vector<std::optional<int>> modifier;
    Eigen::MatrixXd covariates;
    std::vector<std::string> covariate_names;
};

/// Throws std::invalid_argument naming the first violated invariant.
void validate(const TrialData& data);

/// Stable-groups rows by cluster id (clusters ordered by first appearance)
/// and validates the result.
TrialData make_trial(const TrialRows& rows);

/// Same trial with every modifier marked observed (requires `full` to be
/// binary and of length N). Used to unmask generated data.
TrialData with_modifier(const TrialData& data, std::span<const int> full);

/// Same trial with the presence mask replaced.
TrialData with_mask(const TrialData& data, std::span<const std::uint8_t> observed);

// ---------------------------------------------------------------------------
// Formulas

enum class Variable : std::uint8_t { Treatment, Modifier, Outcome, Covariate };

struct Factor {
    Variable var;
    int covariate = -1;  // 0-based, only for Variable::Covariate

    friend bool operator==(const Factor&, const Factor&) = default;
};

/// Product of base variables; the empty product is the intercept.
struct Term {
    std::vector<Factor> factors;

    bool is_intercept() const { return factors.empty(); }
    bool uses(Variable v) const;
    std::string label(std::span<const std::string> covariate_names) const;

    friend bool operator==(const Term&, const Term&) = default;
};

struct Formula {
    std::vector<Term> terms;
    bool has_random_intercept = false;

    std::size_t size() const { return terms.size(); }
    bool uses(Variable v) const;
    std::vector<std::string> labels(std::span<const std::string> covariate_names) const;
};

namespace term {
Factor A();
Factor M();
Factor Y();
Factor X(int k);
Term intercept();
Term of(std::initializer_list<Factor> factors);
}  // namespace term

/// Outcome mean model [1, A, M, A:M].
Formula outcome_formula();

/// Throws std::invalid_argument if the formula is malformed for `p` covariates.
void check_formula(const Formula& formula, std::size_t p);

struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_labels;
};

/// Evaluates each term row-wise. When the formula uses M, missing modifiers
/// are taken from `imputed_modifier` (length N); observed entries always come
/// from the data.
DesignMatrix build_design(const Formula& formula, const TrialData& data,
                          std::optional<std::span<const int>> imputed_modifier = std::nullopt);

/// Rows of `design` whose mask entry is 1.
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& design, std::span<const std::uint8_t> mask);

// ---------------------------------------------------------------------------
// CSV: cluster_id,treatment,outcome,modifier,x1,...,xp (empty or NA = missing)

TrialData read_trial_csv(const std::string& path);
void write_trial_csv(const TrialData& data, const std::string& path);

}  // namespace crt

#endif  // CRT_DATA_HPP
