#pragma once

#include <optional>
#include <span>
#include <vector>

#include "puiq/display.hpp"
#include "puiq/io.hpp"
#include "puiq/net.hpp"
#include "puiq/pu.hpp"

namespace puiq {

enum class DaMode { None, S_to_HU, S_to_HS, S_to_HL };

DaMode da_mode_from_string(std::string_view s);
std::string to_string(DaMode m);

struct TrainConfig {
  DaMode da_mode = DaMode::None;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;
  bool lambda_auto = false;
  int epochs = 30;
  int batch_images = 8;
  int patches_per_image = 128;   // training
  int eval_patches = 1024;       // testing
  double lr_initial = 1e-4;
  double lr_final = 1e-6;
  std::uint64_t seed = 0;
  NormScheme scheme = NormScheme::Pmax;
  NetConfig net;

  void validate() const;
  static TrainConfig from_json_text(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

struct EpochRecord {
  double l_sdr = 0, l_hdr = 0, l_coral = 0, total = 0;
  double lr = 0;
  double lambda = 0;
  double cov_distance = 0;  // mean per-iteration ||C_S - C_T||_F
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  void write_csv(const std::filesystem::path& path) const;
};

struct IterLossRecord {
  double l_sdr = 0, l_hdr = 0, l_coral = 0;
};

// lambda = median(alpha*l_sdr + beta*l_hdr) / median(l_coral) over the
// window, clamped to [1e-6, 1e6]; unchanged when the window's CORAL loss
// is identically zero.
double lambda_autoscale(std::span<const IterLossRecord> window, double alpha,
                        double beta, double current_lambda);

struct TrainResult {
  QualityNetParams params;
  TrainHistory history;
  double lambda_final = 0.0;
};

// Eq.-style combined training loop: one source batch and one target batch
// per iteration, weighted MAE + CORAL objective, AdamW updates with an
// exponential per-epoch learning-rate decay. Deterministic given the seed;
// source and target paths use independent RNG sub-streams.
TrainResult train(const TrainConfig& config, const DatasetManifest& source,
                  const DatasetManifest* target, QualityNetParams init);

// AdamW with decoupled weight decay (0.01) and standard moment defaults.
class AdamW {
 public:
  AdamW(const QualityNetParams& shape, double weight_decay = 0.01);
  void step(QualityNetParams& params, const NetGrads& grads, double lr);

 private:
  NetGrads m_, v_;
  long t_ = 0;
  double weight_decay_;
};

}  // namespace puiq
