#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "puiq/experiment.hpp"
#include "puiq/synth.hpp"
#include "puiq/trainer.hpp"

using namespace puiq;
namespace fs = std::filesystem;

namespace {

struct TinyData {
  DatasetManifest source, target;
};

TinyData tiny_datasets(bool target_labeled = true) {
  SynthConfig sc;
  sc.refs = 2;
  sc.dtypes = {DistType::GaussNoise, DistType::Contrast};
  sc.levels = 2;
  sc.height = sc.width = 64;
  sc.seed = 123;

  TinyData d;
  sc.domain = Domain::SDR;
  sc.out_dir = fs::temp_directory_path() / "puiq_train_src";
  fs::remove_all(sc.out_dir);
  d.source = build_manifest(sc);

  sc.domain = Domain::HDR;
  sc.labeled = target_labeled;
  sc.out_dir = fs::temp_directory_path() / "puiq_train_tgt";
  fs::remove_all(sc.out_dir);
  d.target = build_manifest(sc);
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.da_mode = DaMode::None;
  c.epochs = 3;
  c.batch_images = 4;
  c.patches_per_image = 4;
  c.lr_initial = 1e-3;
  c.lr_final = 1e-4;
  c.seed = 5;
  c.net = NetConfig{8, {10}, 6, CoralFeatureMode::RefDist};
  return c;
}

}  // namespace

TEST_CASE("lambda autoscale follows the median ratio and clamps") {
  std::vector<IterLossRecord> w = {
      {1.0, 0.5, 2.0}, {2.0, 0.5, 4.0}, {3.0, 0.5, 8.0}};
  // alpha=1, beta=2 -> task = {2, 3, 4}, median 3; coral median 4.
  CHECK(lambda_autoscale(w, 1.0, 2.0, 9.0) ==
        doctest::Approx(3.0 / 4.0).epsilon(1e-12));
  // Zero CORAL window leaves lambda unchanged.
  std::vector<IterLossRecord> z = {{1.0, 0.0, 0.0}};
  CHECK(lambda_autoscale(z, 1.0, 1.0, 0.7) == 0.7);
  // Empty window leaves lambda unchanged.
  CHECK(lambda_autoscale({}, 1.0, 1.0, 0.3) == 0.3);
  // Clamping.
  std::vector<IterLossRecord> big = {{1e12, 0.0, 1e-12}};
  CHECK(lambda_autoscale(big, 1.0, 0.0, 1.0) == 1e6);
  std::vector<IterLossRecord> small = {{1e-12, 0.0, 1e12}};
  CHECK(lambda_autoscale(small, 1.0, 0.0, 1.0) == 1e-6);
}

TEST_CASE("adamw matches a scalar reference implementation") {
  QualityNetParams p;
  p.feature_layers.push_back(
      {Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Constant(1, 0.1)});
  p.score_head = {Eigen::MatrixXd::Constant(1, 1, -0.3),
                  Eigen::VectorXd::Constant(1, 0.0)};
  p.weight_head = {Eigen::MatrixXd::Constant(1, 1, 0.2),
                   Eigen::VectorXd::Constant(1, 0.05)};

  AdamW opt(p, 0.01);
  Rng rng(101);
  // Scalar oracle state per parameter.
  const int np = 6;
  double theta[np] = {0.5, 0.1, -0.3, 0.0, 0.2, 0.05};
  double m[np] = {0}, v[np] = {0};
  for (int t = 1; t <= 5; ++t) {
    double g[np];
    for (double& x : g) x = rng.normal(0.0, 1.0);
    NetGrads grads = NetGrads::zeros_like(p);
    grads.feature_layers[0].W(0, 0) = g[0];
    grads.feature_layers[0].b(0) = g[1];
    grads.score_head.W(0, 0) = g[2];
    grads.score_head.b(0) = g[3];
    grads.weight_head.W(0, 0) = g[4];
    grads.weight_head.b(0) = g[5];
    const double lr = 1e-2;
    opt.step(p, grads, lr);
    for (int i = 0; i < np; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, t));
      const double vhat = v[i] / (1.0 - std::pow(0.999, t));
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * theta[i]);
    }
    CHECK(p.feature_layers[0].W(0, 0) == doctest::Approx(theta[0]).epsilon(1e-12));
    CHECK(p.feature_layers[0].b(0) == doctest::Approx(theta[1]).epsilon(1e-12));
    CHECK(p.score_head.W(0, 0) == doctest::Approx(theta[2]).epsilon(1e-12));
    CHECK(p.score_head.b(0) == doctest::Approx(theta[3]).epsilon(1e-12));
    CHECK(p.weight_head.W(0, 0) == doctest::Approx(theta[4]).epsilon(1e-12));
    CHECK(p.weight_head.b(0) == doctest::Approx(theta[5]).epsilon(1e-12));
  }
}

TEST_CASE("train config json round trip") {
  TrainConfig c = tiny_config();
  c.da_mode = DaMode::S_to_HS;
  c.lambda = 0.4;
  c.lambda_auto = true;
  c.net.coral_features = CoralFeatureMode::RefOnly;
  const TrainConfig back = TrainConfig::from_json_text(c.to_json_text());
  CHECK(back.da_mode == DaMode::S_to_HS);
  CHECK(back.lambda == 0.4);
  CHECK(back.lambda_auto);
  CHECK(back.epochs == c.epochs);
  CHECK(back.lr_initial == c.lr_initial);
  CHECK(back.net.patch_size == 8);
  CHECK(back.net.hidden == std::vector<int>{10});
  CHECK(back.net.coral_features == CoralFeatureMode::RefOnly);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{\"epochs\": 0}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{\"alpha\": -1}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("nope"), ParseError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{\"da_mode\": \"x\"}"),
                  ConfigError);
}

TEST_CASE("source-only training runs, records history and is deterministic") {
  const TinyData d = tiny_datasets();
  const TrainConfig cfg = tiny_config();
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const QualityNetParams init = init_params(cfg.net, init_rng);

  const TrainResult a = train(cfg, d.source, nullptr, init);
  const TrainResult b = train(cfg, d.source, nullptr, init);
  CHECK(params_equal_bitwise(a.params, b.params));
  REQUIRE(a.history.epochs.size() == 3);
  for (const auto& e : a.history.epochs) {
    CHECK(std::isfinite(e.l_sdr));
    CHECK(e.l_hdr == 0.0);
    CHECK(e.l_coral == 0.0);
    CHECK(e.cov_distance == 0.0);
  }
  // Exponential decay endpoints.
  CHECK(a.history.epochs[0].lr == doctest::Approx(cfg.lr_initial));
  CHECK(a.history.epochs[2].lr ==
        doctest::Approx(cfg.lr_initial *
                        std::pow(cfg.lr_final / cfg.lr_initial, 2.0 / 3.0)));

  const auto hist_path = fs::temp_directory_path() / "puiq_hist.csv";
  a.history.write_csv(hist_path);
  std::ifstream f(hist_path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,l_sdr,l_hdr,l_coral,total,lr,lambda,cov_distance");
}

TEST_CASE("da training tracks coral and covariance distance") {
  const TinyData d = tiny_datasets();
  TrainConfig cfg = tiny_config();
  cfg.da_mode = DaMode::S_to_HS;
  cfg.lambda = 1.0;
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const QualityNetParams init = init_params(cfg.net, init_rng);
  const TrainResult r = train(cfg, d.source, &d.target, init);
  for (const auto& e : r.history.epochs) {
    CHECK(e.l_coral >= 0.0);
    CHECK(e.cov_distance > 0.0);
    CHECK(std::isfinite(e.l_hdr));
  }
}

TEST_CASE("unsupervised target mode ignores target labels") {
  const TinyData d = tiny_datasets(/*target_labeled=*/false);
  TrainConfig cfg = tiny_config();
  cfg.da_mode = DaMode::S_to_HU;
  cfg.beta = 1.0;  // must be forced to zero internally
  cfg.lambda = 0.5;
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const TrainResult r =
      train(cfg, d.source, &d.target, init_params(cfg.net, init_rng));
  for (const auto& e : r.history.epochs) CHECK(e.l_hdr == 0.0);
}

TEST_CASE("lambda autoscaling updates the running lambda") {
  const TinyData d = tiny_datasets();
  TrainConfig cfg = tiny_config();
  cfg.da_mode = DaMode::S_to_HS;
  cfg.lambda = 1.0;
  cfg.lambda_auto = true;
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const TrainResult r =
      train(cfg, d.source, &d.target, init_params(cfg.net, init_rng));
  CHECK(r.lambda_final != 1.0);
  CHECK(r.lambda_final >= 1e-6);
  CHECK(r.lambda_final <= 1e6);
}

TEST_CASE("train validates inputs") {
  const TinyData d = tiny_datasets();
  TrainConfig cfg = tiny_config();
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const QualityNetParams init = init_params(cfg.net, init_rng);

  // DA mode without a target manifest.
  TrainConfig da = cfg;
  da.da_mode = DaMode::S_to_HS;
  CHECK_THROWS_AS(train(da, d.source, nullptr, init), ConfigError);
  // HDR-tagged source is rejected.
  CHECK_THROWS_AS(train(cfg, d.target, nullptr, init), DataError);
  // Unlabeled source is rejected.
  DatasetManifest unlabeled = d.source;
  unlabeled.records[0].label.reset();
  CHECK_THROWS_AS(train(cfg, unlabeled, nullptr, init), DataError);
  // Empty manifest.
  DatasetManifest empty;
  CHECK_THROWS_AS(train(cfg, empty, nullptr, init), DataError);
}

TEST_CASE("da mode strings round trip") {
  for (DaMode m :
       {DaMode::None, DaMode::S_to_HU, DaMode::S_to_HS, DaMode::S_to_HL})
    CHECK(da_mode_from_string(to_string(m)) == m);
}
