#pragma once

#include <string_view>

#include "puiq/common.hpp"

namespace puiq {

enum class EotfKind { Gamma, Srgb, Linear };

struct Eotf {
  EotfKind kind = EotfKind::Gamma;
  double gamma = 2.2;
};

// Photometric description of a display: gain-offset-gamma response with an
// optional ambient reflection term.
struct DisplayModel {
  double l_max = 100.0;   // peak luminance, cd/m^2
  double l_blk = 0.5;     // black level, cd/m^2
  double reflectivity_k = 0.005;  // dimensionless, [0,1)
  double ambient_lux = 0.0;
  Eotf eotf;

  void validate() const;  // throws ConfigError

  // Ambient reflection luminance (k / pi) * E_amb.
  double ambient_term() const;

  // sRGB-like SDR display: 100 cd/m^2 peak, 0.5 cd/m^2 black (200:1).
  static DisplayModel sdr();
  // HDR display with the given peak luminance.
  static DisplayModel hdr(double l_max = 5000.0);

  static DisplayModel preset(std::string_view name);  // "sdr" | "hdr"
  // JSON keys: l_max, l_blk, k, ambient_lux, eotf ("gamma:2.2"|"srgb"|"linear").
  static DisplayModel from_json_text(const std::string& text);
  static DisplayModel load(const std::string& preset_or_json_path);
};

Eotf eotf_from_string(std::string_view s);
std::string to_string(const Eotf& e);

// Relative output in [0,1] for display-encoded luma v in [0,1].
double eotf_apply(double v, const Eotf& e);

// Emitted luminance per pixel: (l_max - l_blk) * F(V) + l_blk, plus the
// ambient reflection term when requested.
Grid display_response(const Grid& v_image, const DisplayModel& model,
                      bool include_ambient = false);
double display_response_scalar(double v, const DisplayModel& model,
                               bool include_ambient = false);

// Draws a display peak luminance for synthetic data: N(100,10) for SDR,
// N(5000,500) for HDR, clamped below at `floor` (black level + 1 by default).
double sample_lmax(Domain domain, Rng& rng, double floor = 1.5);

}  // namespace puiq
