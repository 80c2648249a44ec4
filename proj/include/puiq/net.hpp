#pragma once

#include <filesystem>
#include <vector>

#include "puiq/common.hpp"
#include "puiq/patches.hpp"

namespace puiq {

struct Dense {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

enum class CoralFeatureMode { RefDist, RefOnly };

struct NetConfig {
  int patch_size = 64;
  std::vector<int> hidden = {64};  // widths of hidden feature layers
  int feature_dim = 64;
  CoralFeatureMode coral_features = CoralFeatureMode::RefDist;
};

// Patch-wise quality model: a shared fully-connected feature extractor with
// tanh activations, a linear score head and a softplus-positive weight head
// on the ref-dist feature difference, pooled as a weighted mean.
struct QualityNetParams {
  std::vector<Dense> feature_layers;
  Dense score_head;   // 1 x d
  Dense weight_head;  // 1 x d
  CoralFeatureMode coral_features = CoralFeatureMode::RefDist;

  int input_dim() const { return static_cast<int>(feature_layers.front().W.cols()); }
  int feature_dim() const { return static_cast<int>(feature_layers.back().W.rows()); }
  int patch_size() const;
  void check_finite() const;
};

QualityNetParams init_params(const NetConfig& cfg, Rng& rng);

enum class DomainTag { Source, Target };

struct FeatureBatch {
  Eigen::MatrixXd features;  // n x d
  DomainTag domain_tag = DomainTag::Source;
};

struct ForwardCache {
  // Activations per path, index 0 is the input layer.
  std::vector<Eigen::MatrixXd> acts_ref, acts_dist;
  Eigen::MatrixXd delta;      // n x d feature difference
  Eigen::VectorXd scores;     // n
  Eigen::VectorXd weight_pre; // n, pre-softplus
  Eigen::VectorXd weights;    // n, positive
  double sum_w = 0.0;
  double quality = 0.0;
  std::size_t shape_tag = 0;  // guards against stale caches
};

struct ForwardResult {
  double quality = 0.0;
  Eigen::VectorXd patch_scores;
  Eigen::VectorXd patch_weights;
  FeatureBatch features;  // final-layer activations (ref[+dist] rows)
  ForwardCache cache;
};

inline constexpr double kWeightEps = 1e-6;

ForwardResult forward(const QualityNetParams& params, const PatchBatch& batch,
                      DomainTag tag = DomainTag::Source);

// Gradient accumulator shaped like the parameters.
struct NetGrads {
  std::vector<Dense> feature_layers;
  Dense score_head, weight_head;

  static NetGrads zeros_like(const QualityNetParams& p);
  void add_scaled(const NetGrads& other, double s);
  double squared_norm() const;
};

// Accumulates into `out` the gradients of
//   d_quality * quality + <d_features, features>
// with respect to every parameter tensor. `d_features` may be empty (no
// feature-level loss) or match the cache's feature-batch row count.
void backward(const QualityNetParams& params, const ForwardCache& cache,
              double d_quality, const Eigen::MatrixXd& d_features,
              NetGrads& out);

// Sample covariance with the n-1 normalizer.
Eigen::MatrixXd covariance(const FeatureBatch& f);

struct CoralResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_source, grad_target;
};

// ||C_S - C_T||_F^2 / (4 d^2) with gradients w.r.t. both feature matrices.
CoralResult coral_loss(const FeatureBatch& f_s, const FeatureBatch& f_t);

struct MaeResult {
  double loss = 0.0;
  Eigen::VectorXd grads;
};

// Mean absolute error; subgradient 0 at exact ties.
MaeResult mae_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label);

double total_loss(double l_sdr, double l_hdr, double l_coral, double alpha,
                  double beta, double lambda);

// Binary checkpoint container: magic "PUIQ", version u32, then per-tensor
// (u32 name length, name, u32 rank, u64 dims, f64 little-endian values).
void save_checkpoint(const std::filesystem::path& path,
                     const QualityNetParams& params);
QualityNetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace puiq
