#include "puiq/synth.hpp"

#include <cmath>

#include "puiq/display.hpp"
#include "puiq/metrics.hpp"

namespace puiq {

DistType dist_from_string(std::string_view s) {
  if (s == "gauss-noise") return DistType::GaussNoise;
  if (s == "gauss-blur") return DistType::GaussBlur;
  if (s == "quantize") return DistType::Quantize;
  if (s == "contrast") return DistType::Contrast;
  if (s == "brightness") return DistType::Brightness;
  throw ConfigError("unknown distortion type: " + std::string(s));
}

std::string to_string(DistType d) {
  switch (d) {
    case DistType::GaussNoise: return "gauss-noise";
    case DistType::GaussBlur: return "gauss-blur";
    case DistType::Quantize: return "quantize";
    case DistType::Contrast: return "contrast";
    case DistType::Brightness: return "brightness";
  }
  return "?";
}

std::vector<RefKind> all_ref_kinds() {
  return {RefKind::Gradient, RefKind::NoiseTexture, RefKind::Checker,
          RefKind::Blobs, RefKind::Mixed};
}

namespace {

void minmax_normalize(Grid& g) {
  const double lo = g.minCoeff(), hi = g.maxCoeff();
  if (hi > lo)
    g = (g - lo) / (hi - lo);
  else
    g.setZero();
}

Grid make_gradient(int h, int w, Rng& rng) {
  Grid g(h, w);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double freq = rng.uniform(1.0, 2.5);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double x = double(c) / (w - 1), y = double(r) / (h - 1);
      // Ramp with a mild large-scale undulation (keeps blur non-trivial).
      g(r, c) = 0.5 * (x + y) +
                0.15 * std::sin(freq * M_PI * x + phase) *
                    std::cos(freq * M_PI * y - phase);
    }
  minmax_normalize(g);
  return g;
}

Grid make_noise_texture(int h, int w, Rng& rng) {
  Grid g = Grid::Zero(h, w);
  for (int octave = 0; octave < 4; ++octave) {
    const double fx = rng.uniform(1.0, 4.0 * (octave + 1));
    const double fy = rng.uniform(1.0, 4.0 * (octave + 1));
    const double px = rng.uniform(0.0, 2.0 * M_PI);
    const double py = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = 1.0 / (octave + 1);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        g(r, c) += amp * std::sin(fx * M_PI * c / w + px) *
                   std::sin(fy * M_PI * r / h + py);
  }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) g(r, c) += 0.35 * rng.uniform();
  minmax_normalize(g);
  return g;
}

Grid make_checker(int h, int w, Rng& rng) {
  const int tile = 8 + static_cast<int>(rng.uniform_int(17));
  Grid g(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const bool on = ((r / tile) + (c / tile)) % 2 == 0;
      const double base = on ? 0.75 : 0.25;
      const double ramp = 0.25 * (double(r) / (h - 1) + double(c) / (w - 1)) - 0.25;
      g(r, c) = base + ramp;
    }
  minmax_normalize(g);
  return g;
}

Grid make_blobs(int h, int w, Rng& rng) {
  Grid g = Grid::Zero(h, w);
  const int nblobs = 6 + static_cast<int>(rng.uniform_int(5));
  for (int b = 0; b < nblobs; ++b) {
    const double cr = rng.uniform(0.0, double(h));
    const double cc = rng.uniform(0.0, double(w));
    const double sigma = rng.uniform(0.12, 0.35) * std::min(h, w);
    const double amp = rng.uniform(0.4, 1.0) * (b % 2 == 0 ? 1.0 : -1.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        g(r, c) += amp * std::exp(-0.5 * d2 / (sigma * sigma));
      }
  }
  // Blend in a ramp so the histogram stays spread out.
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      g(r, c) += 0.8 * (double(r) / (h - 1) + double(c) / (w - 1));
  minmax_normalize(g);
  return g;
}

}  // namespace

Grid gen_reference(RefKind kind, int h, int w, Rng& rng) {
  if (h < 64 || w < 64)
    throw DimensionError("reference images must be at least 64x64");
  switch (kind) {
    case RefKind::Gradient:
      return make_gradient(h, w, rng);
    case RefKind::NoiseTexture:
      return make_noise_texture(h, w, rng);
    case RefKind::Checker:
      return make_checker(h, w, rng);
    case RefKind::Blobs:
      return make_blobs(h, w, rng);
    case RefKind::Mixed: {
      Grid g = 0.5 * make_gradient(h, w, rng) + 0.3 * make_blobs(h, w, rng) +
               0.4 * make_noise_texture(h, w, rng);
      minmax_normalize(g);
      return g;
    }
  }
  throw ConfigError("unknown reference kind");
}

Grid distort(const Grid& img, DistType dtype, int level, Rng& rng) {
  if (level < 1 || level > 5)
    throw ConfigError("distortion level must be in 1..5");
  const int li = level - 1;
  Grid out = img;
  switch (dtype) {
    case DistType::GaussNoise: {
      const double sigma = 0.01 * std::pow(2.0, li);  // 0.01 .. 0.16
      for (Eigen::Index i = 0; i < out.size(); ++i)
        out.data()[i] =
            std::clamp(out.data()[i] + rng.normal(0.0, sigma), 0.0, 1.0);
      break;
    }
    case DistType::GaussBlur: {
      static constexpr double kSigmas[5] = {0.6, 0.9, 1.35, 2.0, 3.0};
      out = gaussian_filter(img, kSigmas[li]);
      break;
    }
    case DistType::Quantize: {
      static constexpr int kLevels[5] = {96, 48, 24, 12, 6};
      const double q = kLevels[li] - 1;
      out = (img * q).round() / q;
      break;
    }
    case DistType::Contrast: {
      static constexpr double kFactors[5] = {0.85, 0.7, 0.55, 0.4, 0.25};
      out = 0.5 + kFactors[li] * (img - 0.5);
      break;
    }
    case DistType::Brightness: {
      const double delta = 0.045 * level;
      out = (img + delta).min(1.0).max(0.0);
      break;
    }
  }
  return out;
}

DatasetManifest build_manifest(const SynthConfig& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (!fs::is_directory(cfg.out_dir))
    throw DataError("cannot create output directory " + cfg.out_dir.string());

  const auto kinds = all_ref_kinds();
  DatasetManifest m;
  m.dir = cfg.out_dir;
  m.provenance["seed"] = std::to_string(cfg.seed);
  m.provenance["domain"] = to_string(cfg.domain);
  m.provenance["lmax_distribution"] =
      cfg.domain == Domain::HDR ? "normal(5000,500)" : "normal(100,10)";

  Rng lmax_rng = Rng::substream(cfg.seed, "lmax");
  const std::string ext = cfg.domain == Domain::HDR ? ".pfm" : ".png";

  struct Job {
    int ref_idx;
    Grid v_ref;          // 8-bit-quantized display-encoded luma
    double l_max = 0.0;  // HDR only
  };
  std::vector<Job> jobs;
  jobs.reserve(static_cast<std::size_t>(cfg.refs));
  for (int i = 0; i < cfg.refs; ++i) {
    Rng ref_rng = Rng::substream(cfg.seed, "ref-" + std::to_string(i));
    Grid v = gen_reference(kinds[static_cast<std::size_t>(i) % kinds.size()],
                           cfg.height, cfg.width, ref_rng);
    // Quantize luma to 8 bits so SDR and HDR variants share exact content.
    v = (v * 255.0).round() / 255.0;
    Job job{i, std::move(v)};
    if (cfg.domain == Domain::HDR) job.l_max = sample_lmax(Domain::HDR, lmax_rng);
    jobs.push_back(std::move(job));
  }

  auto render = [&](const Grid& v, const Job& job,
                    const std::string& name) -> std::string {
    const std::string rel = name + ext;
    const fs::path path = cfg.out_dir / rel;
    if (cfg.domain == Domain::HDR) {
      DisplayModel dm = DisplayModel::sdr();
      dm.l_max = job.l_max;
      write_pfm(path, display_response(v, dm));
    } else {
      write_png8(path, v);
    }
    return rel;
  };

  char buf[64];
  for (const Job& job : jobs) {
    std::snprintf(buf, sizeof(buf), "ref_%03d", job.ref_idx);
    const std::string ref_rel = render(job.v_ref, job, buf);
    for (const DistType dtype : cfg.dtypes) {
      for (int level = 1; level <= cfg.levels; ++level) {
        Rng drng = Rng::substream(
            cfg.seed, "dist-" + std::to_string(job.ref_idx) + "-" +
                          to_string(dtype) + "-" + std::to_string(level));
        Grid dv = distort(job.v_ref, dtype, level, drng);
        dv = (dv * 255.0).round() / 255.0;
        std::snprintf(buf, sizeof(buf), "ref_%03d_%s_l%d", job.ref_idx,
                      to_string(dtype).c_str(), level);
        const std::string dist_rel = render(dv, job, buf);
        DatasetRecord rec;
        rec.ref_path = ref_rel;
        rec.dist_path = dist_rel;
        if (cfg.labeled) rec.label = -double(level);  // rank-only pseudo-label
        rec.domain = cfg.domain;
        rec.dtype = to_string(dtype);
        rec.level = level;
        if (cfg.domain == Domain::HDR) rec.l_max = job.l_max;
        m.records.push_back(std::move(rec));
      }
    }
  }

  write_manifest(cfg.out_dir / "manifest.csv", m);
  return m;
}

}  // namespace puiq
