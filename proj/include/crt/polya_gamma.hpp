#ifndef CRT_POLYA_GAMMA_HPP
#define CRT_POLYA_GAMMA_HPP

#include "crt/rng.hpp"

namespace crt {

/// One draw from PG(b, c) for integer b >= 1.
///
/// PG(1, c) uses the exact alternating-series accept/reject sampler
/// (Devroye's J* construction with truncation point 0.64); PG(b, c) is the
/// sum of b independent PG(1, c) draws. The density depends on c only
/// through |c|.
double pg_sample(int b, double c, RngStream& rng);

/// E[PG(b, c)] = b/(2c) tanh(c/2), b/4 at c = 0.
double pg_mean(int b, double c);
/// Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2)), b/24 at c = 0.
double pg_variance(int b, double c);

}  // namespace crt

#endif  // CRT_POLYA_GAMMA_HPP
