#pragma once

#include "puiq/common.hpp"

namespace puiq {

enum class MetricKind { PSNR, SSIM, PU_PSNR, PU_SSIM };

MetricKind metric_from_string(std::string_view s);
std::string to_string(MetricKind m);

struct MetricResult {
  double score = 0.0;
  MetricKind metric = MetricKind::PSNR;
  double peak = 0.0;  // dynamic-range ceiling used
};

// PSNR cap for identical images (zero MSE).
inline constexpr double kPsnrCapDb = 100.0;

MetricResult psnr(const Grid& ref, const Grid& dist, double peak);

// Single-scale SSIM, 11x11 Gaussian window sigma=1.5, reflection padding,
// C1=(0.01*peak)^2, C2=(0.03*peak)^2.
MetricResult ssim(const Grid& ref, const Grid& dist, double peak);

// PU variant: both luminance images are PU21-encoded (no normalization) and
// scored with the base metric. The peak is 256 for SDR-range sources
// (<= 110 cd/m^2) and pu21_peak() otherwise.
MetricResult pu_metric(const Grid& ref_lum, const Grid& dist_lum,
                       MetricKind base);

// Separable Gaussian filter with reflection padding (shared with distortions).
Grid gaussian_filter(const Grid& img, double sigma);

}  // namespace puiq
