#ifndef CRT_BMMI_HPP
#define CRT_BMMI_HPP

#include <cstddef>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "crt/data.hpp"
#include "crt/glmm.hpp"
#include "crt/impute.hpp"
#include "crt/rng.hpp"

namespace crt {

/// Rate term of the precision update: sum_i alpha_i^2 / 2 (standard) or the
/// cluster-size weighted sum_i n_i alpha_i^2 / 2 (literal reading).
enum class TauUpdate { Standard, Literal };

std::string_view tau_update_token(TauUpdate mode);
TauUpdate parse_tau_update(std::string_view token);

struct GibbsConfig {
    int burnin = 1000;
    int thin = 100;
    int imputations = 15;
    double prior_variance = 100.0;
    double c_hyper = 0.01;
    double d_hyper = 0.01;
    double initial_tau = 0.5;
    TauUpdate tau_update = TauUpdate::Standard;
    GlmmOptions glmm{};
    std::ostream* trace = nullptr;  // CSV: sweep, eta..., tau

    int chain_length() const { return burnin + thin * imputations; }
};

struct GibbsState {
    Eigen::VectorXd eta;
    Eigen::VectorXd alpha;
    double tau_alpha = 0.5;
    std::vector<int> m_current;
    Eigen::VectorXd omega;
    int sweeps = 0;
    int jitter_retries = 0;
};

/// Fixed inputs of the chain: design over all N individuals, the prior
/// centre and the cluster layout.
struct GibbsModel {
    const TrialData* data = nullptr;
    Eigen::MatrixXd design;       // N x q
    Eigen::VectorXd prior_mean;   // eta-hat_O
    Eigen::VectorXd prior_precision_diag;
    std::vector<std::size_t> missing_rows;
    bool init_fallback = false;   // eta-hat_O came from plain logistic regression
};

/// Gaussian full conditional of eta given (omega, alpha, m).
struct EtaConditional {
    Eigen::MatrixXd precision;  // W' Omega W + Sigma^{-1}
    Eigen::VectorXd mean;       // precision^{-1} [Sigma^{-1} eta_O + W'(kappa - Omega I_C alpha)]
};

EtaConditional eta_conditional(const GibbsModel& model, const GibbsState& state);

/// Steps 1-3: eta = eta-hat_O (GLMM on complete cases, plain logistic on
/// failure), alpha = 0, tau = initial_tau, missing M by marginal Bernoulli
/// draws at the observed prevalence. Throws ImputationFailure when both
/// initializers fail.
GibbsModel gibbs_model(const TrialData& data, const Formula& formula, const GibbsConfig& config);
GibbsState gibbs_init(const GibbsModel& model, const GibbsConfig& config, RngStream& rng);

/// One sweep: impute missing M, draw omega ~ PG(1, W eta + I_C alpha),
/// eta | rest, alpha | rest, tau | alpha.
void gibbs_sweep(GibbsState& state, const GibbsModel& model, const GibbsConfig& config, RngStream& rng);

struct BmmiResult {
    std::vector<CompletedDataset> datasets;
    std::vector<int> collected_at;  // sweep index of each dataset
    bool init_fallback = false;
    int jitter_retries = 0;
};

/// Runs burnin sweeps then keeps m_current every `thin` sweeps until D
/// datasets are collected.
BmmiResult bmmi_impute(const TrialData& data, const Formula& formula, const GibbsConfig& config, RngStream& rng);

}  // namespace crt

#endif  // CRT_BMMI_HPP
