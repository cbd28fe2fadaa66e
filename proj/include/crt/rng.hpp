#ifndef CRT_RNG_HPP
#define CRT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace crt {

/// Seeded random stream. Each simulation iteration owns one (or one per
/// method); streams are movable between threads but never shared.
class RngStream {
public:
    using Engine = std::mt19937_64;

    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    /// Stream derived from several integers through std::seed_seq, for
    /// per-(iteration, method, spec) sub-streams.
    static RngStream derived(std::initializer_list<std::uint64_t> keys);

    std::uint64_t seed() const { return seed_; }
    Engine& engine() { return engine_; }

    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1); never returns 0.
    double uniform_open();
    double std_normal();
    double normal(double mean, double variance);
    double exponential(double rate = 1.0);
    double gamma(double shape, double rate);
    int bernoulli(double p);
    int poisson(double mean);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    Engine engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// One draw from N(mean, precision^{-1}): mean + L^{-T} z with
/// precision = L L^T. Throws std::runtime_error if the Cholesky fails.
Eigen::VectorXd mvn_sample_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                                     RngStream& rng);

/// Same draw given an existing Cholesky factor of the precision.
Eigen::VectorXd mvn_sample_precision(const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& factor,
                                     RngStream& rng);

inline double expit(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace crt

#endif  // CRT_RNG_HPP
