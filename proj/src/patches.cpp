#include "puiq/patches.hpp"

#include <cmath>

namespace puiq {

PatchBatch sample_patches(const Grid& ref, const Grid& dist, int count,
                          int size, Rng& rng) {
  if (ref.rows() != dist.rows() || ref.cols() != dist.cols())
    throw DimensionError("ref/dist shapes differ");
  if (count < 1) throw ConfigError("patch count must be >= 1");
  const int h = static_cast<int>(ref.rows());
  const int w = static_cast<int>(ref.cols());
  if (h < size || w < size)
    throw DimensionError("image " + std::to_string(h) + "x" +
                         std::to_string(w) + " smaller than patch size " +
                         std::to_string(size));

  const int g = static_cast<int>(std::ceil(std::sqrt(double(count))));
  const double cell_h = double(h) / g;
  const double cell_w = double(w) / g;
  const double slack_h = std::max(0.0, cell_h - size);
  const double slack_w = std::max(0.0, cell_w - size);

  PatchBatch out;
  out.patch_size = size;
  out.ref_patches.resize(count, size * size);
  out.dist_patches.resize(count, size * size);
  out.coords.reserve(static_cast<std::size_t>(count));

  int emitted = 0;
  while (emitted < count) {
    for (int cr = 0; cr < g && emitted < count; ++cr) {
      for (int cc = 0; cc < g && emitted < count; ++cc) {
        double orow = cr * cell_h;
        double ocol = cc * cell_w;
        if (slack_h > 0.0) orow += rng.uniform(0.0, slack_h);
        if (slack_w > 0.0) ocol += rng.uniform(0.0, slack_w);
        const int r0 = std::min(h - size, static_cast<int>(std::floor(orow)));
        const int c0 = std::min(w - size, static_cast<int>(std::floor(ocol)));
        out.coords.emplace_back(r0, c0);
        for (int pr = 0; pr < size; ++pr)
          for (int pc = 0; pc < size; ++pc) {
            out.ref_patches(emitted, pr * size + pc) = ref(r0 + pr, c0 + pc);
            out.dist_patches(emitted, pr * size + pc) = dist(r0 + pr, c0 + pc);
          }
        ++emitted;
      }
    }
  }
  return out;
}

}  // namespace puiq
