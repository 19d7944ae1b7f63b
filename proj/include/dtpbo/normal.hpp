#ifndef DTPBO_NORMAL_HPP
#define DTPBO_NORMAL_HPP

#include <cmath>
#include <numbers>

namespace dtpbo::normal {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln(sqrt(2*pi))

/// Below this argument ln Phi switches from erfc to the asymptotic series.
inline constexpr double kTailCutoff = -30.0;

inline double pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

inline double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace detail {

// S(z) = 1 - 1/z^2 + 3/z^4 - 15/z^6 + ... so that Phi(z) = phi(z) * S(z) / (-z)
// for z -> -inf. Returns S - 1 to keep the small part exact.
inline double tail_series_minus_one(double z) {
  const double inv_z2 = 1.0 / (z * z);
  double term = 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 12; ++k) {
    term *= -(2.0 * k - 1.0) * inv_z2;
    sum += term;
  }
  return sum;
}

}  // namespace detail

/// Natural log of the standard normal CDF, accurate for arbitrarily negative z.
inline double log_cdf(double z) {
  if (z >= kTailCutoff) {
    if (z > 5.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
    return std::log(cdf(z));
  }
  const double s_minus_one = detail::tail_series_minus_one(z);
  return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log1p(s_minus_one);
}

/// phi(z) / Phi(z), the derivative of log_cdf.
inline double mills_ratio(double z) {
  if (z >= kTailCutoff) return std::exp(-0.5 * z * z - kLogSqrt2Pi - log_cdf(z));
  return -z / (1.0 + detail::tail_series_minus_one(z));
}

/// r(z) * (z + r(z)) with r the Mills ratio; the second derivative of -ln Phi.
/// Evaluated without the z + r cancellation in the far tail.
inline double neg_log_cdf_curvature(double z) {
  if (z >= kTailCutoff) {
    const double r = mills_ratio(z);
    return r * (z + r);
  }
  const double s_minus_one = detail::tail_series_minus_one(z);
  const double s = 1.0 + s_minus_one;
  const double r = -z / s;
  const double z_plus_r = z * s_minus_one / s;  // z + r = -z (1 - S) / S
  return r * z_plus_r;
}

}  // namespace dtpbo::normal

#endif  // DTPBO_NORMAL_HPP
