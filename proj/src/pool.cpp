#include "crt/pool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace crt {

std::string_view nu_obs_token(NuObsMode mode) { return mode == NuObsMode::Standard ? "standard" : "literal"; }

NuObsMode parse_nu_obs(std::string_view token) {
    if (token == "standard") return NuObsMode::Standard;
    if (token == "literal") return NuObsMode::Literal;
    throw std::invalid_argument("unknown nu-obs mode '" + std::string(token) + "'");
}

double t_critical(double nu, double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
    const double upper = 1.0 - (1.0 - level) / 2.0;
    if (std::isinf(nu)) return boost::math::quantile(boost::math::normal_distribution<double>(), upper);
    if (!(nu > 0.0)) throw std::domain_error("degrees of freedom must be positive");
    return boost::math::quantile(boost::math::students_t_distribution<double>(nu), upper);
}

double t_two_sided_p(double statistic, double nu) {
    const double a = std::fabs(statistic);
    if (std::isnan(a)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(nu)) return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), a));
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(nu), a));
}

WaldInterval wald_interval(double estimate, double std_error, double level, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("Wald degrees of freedom must be positive");
    const double z = t_critical(df, level);
    const double p = std_error > 0.0 ? t_two_sided_p(estimate / std_error, df)
                                     : (estimate == 0.0 ? 1.0 : 0.0);
    return {estimate - z * std_error, estimate + z * std_error, p};
}

PooledResult pool(std::span<const double> estimates, std::span<const double> variances, std::size_t n_clusters,
                  double level, NuObsMode mode) {
    const std::size_t d = estimates.size();
    if (d < 2) throw std::invalid_argument("pooling needs at least two imputations");
    if (variances.size() != d) throw std::invalid_argument("estimates and variances differ in length");
    if (n_clusters < 3) throw std::invalid_argument("pooling needs at least three clusters");
    for (double v : variances)
        if (!(v >= 0.0)) throw std::invalid_argument("variances must be non-negative");

    const double D = static_cast<double>(d);
    PooledResult out;
    // deviations from the first estimate keep identical completions at B = 0 exactly
    const double shift = estimates[0];
    double sum_shift = 0.0, sum_shift2 = 0.0, sum_var = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double s = estimates[k] - shift;
        sum_shift += s;
        sum_shift2 += s * s;
        sum_var += variances[k];
    }
    out.estimate = shift + sum_shift / D;

    out.within_var = sum_var / D;
    out.between_var = std::max(0.0, (sum_shift2 - sum_shift * sum_shift / D) / (D - 1.0));
    out.total_var = out.within_var + out.between_var + out.between_var / D;
    const double sum_dev2 = (D - 1.0) * out.between_var;
    const double sum_est = D * out.estimate;

    const double inf = std::numeric_limits<double>::infinity();
    if (sum_dev2 > 0.0) {
        const double ratio = sum_var / ((D + 1.0) * sum_dev2 / (D - 1.0));
        out.nu = (D - 1.0) * (1.0 + ratio) * (1.0 + ratio);
    } else {
        out.nu = inf;
    }

    const double Cd = static_cast<double>(n_clusters);
    const double denom = mode == NuObsMode::Standard ? sum_var : std::fabs(sum_est);
    double r = 0.0;
    if (sum_dev2 > 0.0) r = denom > 0.0 ? (D + 1.0) * sum_dev2 / ((D - 1.0) * denom) : inf;
    out.nu_obs = (Cd - 1.0) * (Cd - 2.0) / (Cd + 1.0) / (1.0 + r);
    out.nu_adj = std::isinf(out.nu) ? out.nu_obs : 1.0 / (1.0 / out.nu + 1.0 / out.nu_obs);

    const double se = std::sqrt(out.total_var);
    if (out.nu_adj > 0.0) {
        const double t = t_critical(out.nu_adj, level);
        out.ci_low = out.estimate - t * se;
        out.ci_high = out.estimate + t * se;
        out.p_value = se > 0.0 ? t_two_sided_p(out.estimate / se, out.nu_adj) : (out.estimate == 0.0 ? 1.0 : 0.0);
    } else {
        // every imputation disagrees infinitely relative to its variance; no usable reference
        out.ci_low = -inf;
        out.ci_high = inf;
        out.p_value = 1.0;
    }
    return out;
}

}  // namespace crt
