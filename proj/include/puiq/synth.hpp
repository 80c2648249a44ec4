#pragma once

#include <filesystem>
#include <vector>

#include "puiq/common.hpp"
#include "puiq/io.hpp"

namespace puiq {

enum class RefKind { Gradient, NoiseTexture, Checker, Blobs, Mixed };
enum class DistType { GaussNoise, GaussBlur, Quantize, Contrast, Brightness };

DistType dist_from_string(std::string_view s);
std::string to_string(DistType d);
std::vector<RefKind> all_ref_kinds();

// Deterministic synthetic reference image in [0,1], min-max normalized so
// the full range is spanned.
Grid gen_reference(RefKind kind, int h, int w, Rng& rng);

// Applies one distortion at severity level 1..5. Each level is generated
// independently from the reference; severity parameters are spaced so the
// ladder is strictly monotone under PU-PSNR.
Grid distort(const Grid& img, DistType dtype, int level, Rng& rng);

struct SynthConfig {
  int refs = 24;
  std::vector<DistType> dtypes = {DistType::GaussNoise, DistType::GaussBlur,
                                  DistType::Quantize, DistType::Contrast};
  int levels = 5;
  Domain domain = Domain::SDR;
  int height = 128;
  int width = 128;
  bool labeled = true;  // false: omit quality labels (unlabeled DA target)
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

// Renders references and distortion ladders to out_dir and writes
// out_dir/manifest.csv. SDR images are stored as 8-bit PNG luma; HDR records
// store the display-simulated luminance as PFM, with the per-reference
// sampled L_max recorded in the manifest.
DatasetManifest build_manifest(const SynthConfig& cfg);

}  // namespace puiq
