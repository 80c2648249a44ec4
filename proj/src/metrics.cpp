#include "puiq/metrics.hpp"

#include <cmath>
#include <vector>

#include "puiq/pu.hpp"

namespace puiq {

MetricKind metric_from_string(std::string_view s) {
  if (s == "psnr") return MetricKind::PSNR;
  if (s == "ssim") return MetricKind::SSIM;
  if (s == "pu-psnr") return MetricKind::PU_PSNR;
  if (s == "pu-ssim") return MetricKind::PU_SSIM;
  throw ConfigError("unknown metric: " + std::string(s));
}

std::string to_string(MetricKind m) {
  switch (m) {
    case MetricKind::PSNR: return "psnr";
    case MetricKind::SSIM: return "ssim";
    case MetricKind::PU_PSNR: return "pu-psnr";
    case MetricKind::PU_SSIM: return "pu-ssim";
  }
  return "?";
}

namespace {

void check_same_shape(const Grid& a, const Grid& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("image shapes differ: " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

inline Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  // Mirror without repeating the edge sample: -1 -> 1, n -> n-2.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

Grid filter_separable(const Grid& img, const std::vector<double>& k) {
  const int radius = (static_cast<int>(k.size()) - 1) / 2;
  const Eigen::Index h = img.rows(), w = img.cols();
  Grid tmp(h, w), out(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[static_cast<std::size_t>(j + radius)] *
               img(r, reflect(c + j, w));
      tmp(r, c) = acc;
    }
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[static_cast<std::size_t>(j + radius)] *
               tmp(reflect(r + j, h), c);
      out(r, c) = acc;
    }
  return out;
}

}  // namespace

Grid gaussian_filter(const Grid& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return filter_separable(img, gaussian_kernel(sigma, radius));
}

MetricResult psnr(const Grid& ref, const Grid& dist, double peak) {
  check_same_shape(ref, dist);
  if (!(peak > 0.0)) throw DomainError("psnr peak must be positive");
  const double mse = (ref - dist).square().mean();
  double score = kPsnrCapDb;
  if (mse > 0.0)
    score = std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
  return MetricResult{score, MetricKind::PSNR, peak};
}

MetricResult ssim(const Grid& ref, const Grid& dist, double peak) {
  check_same_shape(ref, dist);
  if (ref.rows() < 11 || ref.cols() < 11)
    throw DimensionError("ssim requires images of at least 11x11");
  if (!(peak > 0.0)) throw DomainError("ssim peak must be positive");

  const auto k = gaussian_kernel(1.5, 5);  // 11x11 window
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  const Grid mu1 = filter_separable(ref, k);
  const Grid mu2 = filter_separable(dist, k);
  const Grid s11 = filter_separable(ref * ref, k) - mu1 * mu1;
  const Grid s22 = filter_separable(dist * dist, k) - mu2 * mu2;
  const Grid s12 = filter_separable(ref * dist, k) - mu1 * mu2;

  const Grid num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2);
  const Grid den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2);
  const double score = (num / den).mean();
  return MetricResult{score, MetricKind::SSIM, peak};
}

MetricResult pu_metric(const Grid& ref_lum, const Grid& dist_lum,
                       MetricKind base) {
  check_same_shape(ref_lum, dist_lum);
  const double max_lum = std::max(ref_lum.maxCoeff(), dist_lum.maxCoeff());
  // SDR-like sources slot into the 0-256 PU range by design.
  const double peak = max_lum <= 110.0 ? 256.0 : pu21_peak();
  const Grid pr = pu21_encode(ref_lum).values;
  const Grid pd = pu21_encode(dist_lum).values;
  MetricResult r = base == MetricKind::SSIM || base == MetricKind::PU_SSIM
                       ? ssim(pr, pd, peak)
                       : psnr(pr, pd, peak);
  r.metric = (base == MetricKind::SSIM || base == MetricKind::PU_SSIM)
                 ? MetricKind::PU_SSIM
                 : MetricKind::PU_PSNR;
  return r;
}

}  // namespace puiq
