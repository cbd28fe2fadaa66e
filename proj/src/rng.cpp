#include "crt/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace crt {

RngStream RngStream::derived(std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    for (std::uint64_t k : keys) {
        words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return RngStream((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
}

double RngStream::uniform() {
    // 53 random bits; independent of the library's generate_canonical.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
    double u;
    do {
        u = uniform();
    } while (u == 0.0);
    return u;
}

double RngStream::std_normal() { return normal_(engine_); }

double RngStream::normal(double mean, double variance) {
    if (!(variance >= 0.0)) throw std::domain_error("normal: variance must be non-negative");
    return mean + std::sqrt(variance) * std_normal();
}

double RngStream::exponential(double rate) {
    if (!(rate > 0.0)) throw std::domain_error("exponential: rate must be positive");
    return -std::log(uniform_open()) / rate;
}

double RngStream::gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw std::domain_error("gamma: shape and rate must be positive");
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    return dist(engine_);
}

int RngStream::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("bernoulli: p outside [0, 1]");
    return uniform() < p ? 1 : 0;
}

int RngStream::poisson(double mean) {
    if (!(mean >= 0.0)) throw std::domain_error("poisson: mean must be non-negative");
    if (mean == 0.0) return 0;
    std::poisson_distribution<int> dist(mean);
    return dist(engine_);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::domain_error("below: empty range");
    // Lemire-style rejection keeps the draw unbiased and engine-defined.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

Eigen::VectorXd mvn_sample_precision(const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& factor,
                                     RngStream& rng) {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.std_normal();
    // Solve L^T x = z so that Cov(x) = (L L^T)^{-1}.
    factor.matrixU().solveInPlace(z);
    return mean + z;
}

Eigen::VectorXd mvn_sample_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                                     RngStream& rng) {
    if (precision.rows() != mean.size() || precision.cols() != mean.size())
        throw std::invalid_argument("mvn_sample_precision: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw std::runtime_error("precision matrix is not positive definite");
    return mvn_sample_precision(mean, llt, rng);
}

}  // namespace crt
