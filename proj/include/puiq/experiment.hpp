#pragma once

#include <filesystem>

#include "puiq/eval.hpp"
#include "puiq/synth.hpp"
#include "puiq/trainer.hpp"

namespace puiq {

// Desk-scale CORAL ablation: synthetic SDR source + simulated-HDR target,
// trained with and without the CORAL term across several seeds, evaluated
// on a held-out simulated-HDR set.
struct ExperimentConfig {
  std::filesystem::path out_dir;
  std::uint64_t seed = 7;
  int num_seeds = 3;
  int epochs = 30;
  int refs = 8;
  int test_refs = 6;
  int levels = 5;
  int image_size = 128;
  int batch_images = 8;
  int patches_per_image = 8;
  int eval_patches = 256;
  double lr_initial = 3e-3;
  double lr_final = 1e-4;
  NetConfig net{64, {24}, 16, CoralFeatureMode::RefDist};
};

struct ArmOutcome {
  std::uint64_t seed = 0;
  double lambda_final = 0.0;
  double final_cov_distance = 0.0;
  double hdr_srocc = 0.0;
};

struct ExperimentResult {
  std::vector<ArmOutcome> baseline;  // lambda = 0
  std::vector<ArmOutcome> coral;     // lambda auto-scaled
  double median_cov_baseline = 0.0;
  double median_cov_coral = 0.0;
  double median_srocc_baseline = 0.0;
  double median_srocc_coral = 0.0;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_experiment_csv(const std::filesystem::path& path,
                          const ExperimentResult& r);

// True when a lambda=0, beta=0 DA run yields parameters bitwise identical to
// a source-only run with the same seed and initialization.
bool source_only_equivalent(const ExperimentConfig& cfg);

bool params_equal_bitwise(const QualityNetParams& a, const QualityNetParams& b);

double median(std::vector<double> v);

}  // namespace puiq
