#include "crt/polya_gamma.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crt {
namespace {

constexpr double kTrunc = 0.64;
constexpr double kPi = std::numbers::pi;

double log_norm_cdf(double x) {
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    // Mills-ratio asymptote; relative error < 1e-3 at x = -30.
    return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi);
}

// n-th coefficient of the alternating series for the J*(1, 0) density,
// split at the truncation point into its two convergent representations.
double series_coef(int n, double x) {
    const double k = n + 0.5;
    if (x > kTrunc) return kPi * k * std::exp(-0.5 * k * k * kPi * kPi * x);
    if (x <= 0.0) return 0.0;
    const double two_over_pix = 2.0 / (kPi * x);
    return kPi * k * two_over_pix * std::sqrt(two_over_pix) * std::exp(-2.0 * k * k / x);
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, kTrunc).
double truncated_inverse_gauss(double z, RngStream& rng) {
    if (z < 1.0 / kTrunc) {
        // mean beyond the truncation point: propose from the z = 0 law and thin
        while (true) {
            double e1, e2;
            do {
                e1 = rng.exponential();
                e2 = rng.exponential();
            } while (e1 * e1 > 2.0 * e2 / kTrunc);
            const double root = 1.0 + kTrunc * e1;
            const double x = kTrunc / (root * root);
            if (rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
        }
    }
    const double mu = 1.0 / z;
    double x;
    do {
        const double n = rng.std_normal();
        const double y = n * n;
        const double muy = mu * y;
        x = mu + 0.5 * mu * muy - 0.5 * mu * std::sqrt(4.0 * muy + muy * muy);
        if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    } while (x > kTrunc);
    return x;
}

// One draw of J*(1, z); PG(1, c) = J*(1, c/2) / 4.
double draw_jstar(double z, RngStream& rng) {
    const double k = 0.125 * kPi * kPi + 0.5 * z * z;
    const double root_t = std::sqrt(kTrunc);
    const double b = (kTrunc * z - 1.0) / root_t;
    const double a = -(kTrunc * z + 1.0) / root_t;
    double prob_right;
    if (z < 8.0) {
        const double p = 0.5 * kPi / k * std::exp(-k * kTrunc);
        const double q = std::exp(-z) * std::erfc(-b / std::numbers::sqrt2) + std::exp(z) * std::erfc(-a / std::numbers::sqrt2);
        prob_right = p / (p + q);
    } else {
        // log space once exp(z) * Phi(a) stops being representable
        const double log_p = std::log(0.5 * kPi / k) - k * kTrunc;
        const double lq1 = -z + log_norm_cdf(b);
        const double lq2 = z + log_norm_cdf(a);
        const double lq_max = std::max(lq1, lq2);
        const double log_q = std::log(2.0) + lq_max + std::log(std::exp(lq1 - lq_max) + std::exp(lq2 - lq_max));
        prob_right = 1.0 / (1.0 + std::exp(log_q - log_p));
    }

    while (true) {
        double x;
        if (rng.uniform() < prob_right) x = kTrunc + rng.exponential() / k;
        else x = truncated_inverse_gauss(z, rng);

        double s = series_coef(0, x);
        const double y = rng.uniform() * s;
        for (int n = 1;; ++n) {
            if (n % 2 == 1) {
                s -= series_coef(n, x);
                if (y <= s) return x;
            } else {
                s += series_coef(n, x);
                if (y > s) break;
            }
        }
    }
}

}  // namespace

double pg_sample(int b, double c, RngStream& rng) {
    if (b < 1) throw std::invalid_argument("pg_sample: b must be >= 1");
    if (!std::isfinite(c)) throw std::invalid_argument("pg_sample: tilt must be finite");
    const double z = 0.5 * std::fabs(c);
    double sum = 0.0;
    for (int i = 0; i < b; ++i) sum += 0.25 * draw_jstar(z, rng);
    return sum;
}

double pg_mean(int b, double c) {
    c = std::fabs(c);
    if (c < 1e-6) return b * (0.25 - c * c / 48.0);
    return b / (2.0 * c) * std::tanh(0.5 * c);
}

double pg_variance(int b, double c) {
    c = std::fabs(c);
    if (c < 1e-3) return b * (1.0 / 24.0 - c * c / 120.0);
    if (c > 40.0) return b / (2.0 * c * c * c);
    const double ch = std::cosh(0.5 * c);
    return b * (std::sinh(c) - c) / (4.0 * c * c * c * ch * ch);
}

}  // namespace crt
