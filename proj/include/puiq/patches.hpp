#pragma once

#include <utility>
#include <vector>

#include "puiq/common.hpp"

namespace puiq {

// Aligned reference/distorted patch batch. Each matrix row is one flattened
// (row-major) size x size patch; ref and dist rows share origins.
struct PatchBatch {
  Eigen::MatrixXd ref_patches;   // n x (size*size)
  Eigen::MatrixXd dist_patches;  // n x (size*size)
  std::vector<std::pair<int, int>> coords;  // (row, col) origins
  int patch_size = 64;
};

// Lays a ceil(sqrt(n))-cell grid over the image and draws one patch per cell,
// cycling through cells until n patches are emitted. Each origin is jittered
// uniformly over the cell's free slack (cell extent minus patch size, when
// positive) and clamped to the image bounds.
PatchBatch sample_patches(const Grid& ref, const Grid& dist, int count,
                          int size, Rng& rng);

}  // namespace puiq
