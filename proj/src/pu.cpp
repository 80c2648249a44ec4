#include "puiq/pu.hpp"

#include <cmath>

namespace puiq {

namespace {

// PU21 fitted coefficients, banding + glare variant, taken from the
// reference implementation of PU21 (github.com/gfxdisp/pu21).
constexpr double kPu21P[7] = {0.353487901,    0.3734658629, 8.277049286e-05,
                              0.9062562627,   0.09150303166, 0.9099517204,
                              596.3148142};

double pu21_raw(double y) {
  const double t = std::pow(y, kPu21P[3]);
  return kPu21P[6] *
         (std::pow((kPu21P[0] + kPu21P[1] * t) / (1.0 + kPu21P[2] * t),
                   kPu21P[4]) -
          kPu21P[5]);
}

// ST 2084 constants.
constexpr double kPqM1 = 2610.0 / 16384.0;
constexpr double kPqM2 = 2523.0 / 4096.0 * 128.0;
constexpr double kPqC1 = 3424.0 / 4096.0;
constexpr double kPqC2 = 2413.0 / 4096.0 * 32.0;
constexpr double kPqC3 = 2392.0 / 4096.0 * 32.0;

}  // namespace

NormScheme scheme_from_string(std::string_view s) {
  if (s == "pmax") return NormScheme::Pmax;
  if (s == "255" || s == "div255") return NormScheme::Div255;
  if (s == "none") return NormScheme::None;
  throw ConfigError("unknown normalization scheme: " + std::string(s));
}

double pu21_encode_scalar(double luminance) {
  const double y = std::clamp(luminance, kPu21LumMin, kPu21LumMax);
  return pu21_raw(y);
}

EncodedImage pu21_encode(const Grid& luminance, ClampStats* stats) {
  Grid out(luminance.rows(), luminance.cols());
  long below = 0, above = 0;
  const double* in = luminance.data();
  double* o = out.data();
  const Eigen::Index n = luminance.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double y = in[i];
    if (y < kPu21LumMin) {
      y = kPu21LumMin;
      ++below;
    } else if (y > kPu21LumMax) {
      y = kPu21LumMax;
      ++above;
    }
    o[i] = pu21_raw(y);
  }
  if (stats) {
    stats->below += below;
    stats->above += above;
  }
  return EncodedImage{std::move(out), EncoderKind::PU21, NormScheme::None,
                      pu21_peak()};
}

double pu21_decode_scalar(double pu) {
  static const double lo_v = pu21_raw(kPu21LumMin);
  static const double hi_v = pu21_raw(kPu21LumMax);
  const double tol = 1e-6 * (hi_v - lo_v);
  if (pu < lo_v - tol || pu > hi_v + tol)
    throw DomainError("PU value out of encoder range: " + std::to_string(pu));
  // Bisection in log-luminance.
  double lo = std::log(kPu21LumMin), hi = std::log(kPu21LumMax);
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (pu21_raw(std::exp(mid)) < pu)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

Grid pu21_decode(const Grid& pu) {
  Grid out(pu.rows(), pu.cols());
  for (Eigen::Index i = 0; i < pu.size(); ++i)
    out.data()[i] = pu21_decode_scalar(pu.data()[i]);
  return out;
}

double pu21_peak() {
  static const double peak = pu21_raw(kPu21LumMax);
  return peak;
}

double pq_encode_scalar(double luminance) {
  if (!(luminance >= 0.0))
    throw DomainError("PQ input must be >= 0");
  const double y = std::pow(std::min(luminance, kPu21LumMax) / 10000.0, kPqM1);
  return std::pow((kPqC1 + kPqC2 * y) / (1.0 + kPqC3 * y), kPqM2);
}

EncodedImage pq_encode(const Grid& luminance, bool scale255, ClampStats* stats) {
  Grid out(luminance.rows(), luminance.cols());
  long above = 0;
  const double s = scale255 ? 255.0 : 1.0;
  for (Eigen::Index i = 0; i < luminance.size(); ++i) {
    double l = luminance.data()[i];
    if (l > kPu21LumMax) {
      l = kPu21LumMax;
      ++above;
    }
    out.data()[i] = s * pq_encode_scalar(l);
  }
  if (stats) stats->above += above;
  return EncodedImage{std::move(out), EncoderKind::PQ255, NormScheme::None, s};
}

EncodedImage normalize(const EncodedImage& e, NormScheme scheme) {
  if (e.scheme != NormScheme::None)
    throw StateError("image is already normalized");
  if (scheme == NormScheme::None) return e;
  const double divisor = scheme == NormScheme::Pmax ? e.raw_peak : 255.0;
  return EncodedImage{e.values / divisor, e.encoder, scheme, e.raw_peak};
}

}  // namespace puiq
