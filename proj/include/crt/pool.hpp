#ifndef CRT_POOL_HPP
#define CRT_POOL_HPP

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

namespace crt {

/// How r in nu_obs = ((C-1)(C-2)/(C+1)) / (1 + r) is formed.
///   Standard: r = (D+1) sum (g_d - g)^2 / ((D-1) sum Var_d)
///   Literal:  r = (D+1) sum (g_d - g)^2 / ((D-1) |sum g_d|)
enum class NuObsMode { Standard, Literal };

std::string_view nu_obs_token(NuObsMode mode);
NuObsMode parse_nu_obs(std::string_view token);

struct PooledResult {
    double estimate = 0.0;
    double within_var = 0.0;
    double between_var = 0.0;
    double total_var = 0.0;
    double nu = 0.0;       // +inf when the between-imputation variance is 0
    double nu_obs = 0.0;
    double nu_adj = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
};

/// Rubin's rule for one coefficient with the small-sample adjusted degrees
/// of freedom. Requires D >= 2, variances >= 0 and C >= 3.
PooledResult pool(std::span<const double> estimates, std::span<const double> variances, std::size_t n_clusters,
                  double level = 0.95, NuObsMode mode = NuObsMode::Standard);

/// Two-sided quantile t_{nu, 1 - (1 - level)/2}; the normal quantile for
/// infinite nu.
double t_critical(double nu, double level);
double t_two_sided_p(double statistic, double nu);

struct WaldInterval {
    double ci_low;
    double ci_high;
    double p_value;
};

/// estimate +- z * se with a normal reference.
/// Normal reference by default; a finite `df` uses Student t.
WaldInterval wald_interval(double estimate, double std_error, double level = 0.95,
                           double df = std::numeric_limits<double>::infinity());

}  // namespace crt

#endif  // CRT_POOL_HPP
