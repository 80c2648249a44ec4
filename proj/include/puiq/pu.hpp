#pragma once

#include "puiq/common.hpp"

namespace puiq {

enum class EncoderKind { PU21, PQ255 };
enum class NormScheme { Pmax, Div255, None };

NormScheme scheme_from_string(std::string_view s);  // "pmax" | "255" | "none"

struct EncodedImage {
  Grid values;
  EncoderKind encoder = EncoderKind::PU21;
  NormScheme scheme = NormScheme::None;
  // Encoder output at 10000 cd/m^2; the P_max divisor.
  double raw_peak = 0.0;
};

// Counts of pixels clamped into the encoder's calibrated luminance range.
struct ClampStats {
  long below = 0;
  long above = 0;
};

// Calibrated PU21 luminance range, cd/m^2.
inline constexpr double kPu21LumMin = 0.005;
inline constexpr double kPu21LumMax = 10000.0;

// PU21 banding+glare encoding. Inputs are clamped to [0.005, 10000] cd/m^2;
// clamp counts are reported through `stats` when given.
double pu21_encode_scalar(double luminance);
EncodedImage pu21_encode(const Grid& luminance, ClampStats* stats = nullptr);

// Numeric inverse of pu21_encode (monotone bisection). Throws DomainError
// for values outside the encoder's output range.
double pu21_decode_scalar(double pu);
Grid pu21_decode(const Grid& pu);

// PU21 value at 10000 cd/m^2 (the P_max normalization constant).
double pu21_peak();

// SMPTE ST 2084 inverse EOTF. Inputs above 10000 cd/m^2 are clamped.
double pq_encode_scalar(double luminance);
EncodedImage pq_encode(const Grid& luminance, bool scale255,
                       ClampStats* stats = nullptr);

// Applies a normalization scheme to a raw encoded image. Normalizing an
// already-normalized image is a StateError.
EncodedImage normalize(const EncodedImage& e, NormScheme scheme);

}  // namespace puiq
