#include "puiq/experiment.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace puiq {

double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool params_equal_bitwise(const QualityNetParams& a, const QualityNetParams& b) {
  auto eq = [](const Dense& x, const Dense& y) {
    if (x.W.rows() != y.W.rows() || x.W.cols() != y.W.cols() ||
        x.b.size() != y.b.size())
      return false;
    return std::memcmp(x.W.data(), y.W.data(),
                       sizeof(double) * static_cast<std::size_t>(x.W.size())) == 0 &&
           std::memcmp(x.b.data(), y.b.data(),
                       sizeof(double) * static_cast<std::size_t>(x.b.size())) == 0;
  };
  if (a.feature_layers.size() != b.feature_layers.size()) return false;
  for (std::size_t i = 0; i < a.feature_layers.size(); ++i)
    if (!eq(a.feature_layers[i], b.feature_layers[i])) return false;
  return eq(a.score_head, b.score_head) && eq(a.weight_head, b.weight_head);
}

namespace {

struct Datasets {
  DatasetManifest source, target, test;
};

Datasets make_datasets(const ExperimentConfig& cfg) {
  const std::vector<DistType> dtypes = {DistType::GaussNoise,
                                        DistType::GaussBlur, DistType::Quantize,
                                        DistType::Contrast};
  SynthConfig sc;
  sc.refs = cfg.refs;
  sc.dtypes = dtypes;
  sc.levels = cfg.levels;
  sc.height = sc.width = cfg.image_size;
  sc.seed = cfg.seed;

  Datasets d;
  sc.domain = Domain::SDR;
  sc.out_dir = cfg.out_dir / "source_sdr";
  d.source = build_manifest(sc);

  // Same references and distortions, simulated as HDR display responses.
  sc.domain = Domain::HDR;
  sc.out_dir = cfg.out_dir / "target_hdr";
  d.target = build_manifest(sc);

  // Held-out references for evaluation.
  sc.domain = Domain::HDR;
  sc.refs = cfg.test_refs;
  sc.seed = splitmix64(cfg.seed ^ 0x7e57da7aULL);
  sc.out_dir = cfg.out_dir / "test_hdr";
  d.test = build_manifest(sc);
  return d;
}

TrainConfig base_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc;
  tc.da_mode = DaMode::S_to_HS;
  tc.alpha = 1.0;
  tc.beta = 1.0;
  tc.epochs = cfg.epochs;
  tc.batch_images = cfg.batch_images;
  tc.patches_per_image = cfg.patches_per_image;
  tc.eval_patches = cfg.eval_patches;
  tc.lr_initial = cfg.lr_initial;
  tc.lr_final = cfg.lr_final;
  tc.scheme = NormScheme::Pmax;
  tc.seed = seed;
  tc.net = cfg.net;
  return tc;
}

double eval_hdr_srocc(const QualityNetParams& params,
                      const DatasetManifest& test,
                      const ExperimentConfig& cfg, std::uint64_t seed) {
  EvalConfig ec;
  ec.scheme = NormScheme::Pmax;
  ec.patches = cfg.eval_patches;
  ec.patch_size = cfg.net.patch_size;
  ec.seed = seed;
  const auto reports = evaluate(params, test, ec);
  for (const auto& r : reports)
    if (r.subset == SubsetTag::HDR) return r.srocc;
  throw DataError("test manifest produced no HDR subset report");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const Datasets data = make_datasets(cfg);

  ExperimentResult res;
  for (int s = 0; s < cfg.num_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    Rng init_rng = Rng::substream(seed, "init");
    const QualityNetParams init = init_params(cfg.net, init_rng);

    TrainConfig baseline_cfg = base_train_config(cfg, seed);
    baseline_cfg.lambda = 0.0;
    const TrainResult baseline =
        train(baseline_cfg, data.source, &data.target, init);

    TrainConfig coral_cfg = base_train_config(cfg, seed);
    coral_cfg.lambda = 1.0;
    coral_cfg.lambda_auto = true;
    const TrainResult coral =
        train(coral_cfg, data.source, &data.target, init);

    res.baseline.push_back(
        ArmOutcome{seed, baseline.lambda_final,
                   baseline.history.epochs.back().cov_distance,
                   eval_hdr_srocc(baseline.params, data.test, cfg, seed)});
    res.coral.push_back(
        ArmOutcome{seed, coral.lambda_final,
                   coral.history.epochs.back().cov_distance,
                   eval_hdr_srocc(coral.params, data.test, cfg, seed)});
  }

  auto collect = [](const std::vector<ArmOutcome>& arms, auto member) {
    std::vector<double> v;
    for (const auto& a : arms) v.push_back(a.*member);
    return v;
  };
  res.median_cov_baseline =
      median(collect(res.baseline, &ArmOutcome::final_cov_distance));
  res.median_cov_coral =
      median(collect(res.coral, &ArmOutcome::final_cov_distance));
  res.median_srocc_baseline =
      median(collect(res.baseline, &ArmOutcome::hdr_srocc));
  res.median_srocc_coral = median(collect(res.coral, &ArmOutcome::hdr_srocc));
  return res;
}

void write_experiment_csv(const std::filesystem::path& path,
                          const ExperimentResult& r) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << "arm,seed,lambda_final,final_cov_distance,hdr_srocc\n";
  for (const auto& a : r.baseline)
    f << "lambda0," << a.seed << "," << a.lambda_final << ","
      << a.final_cov_distance << "," << a.hdr_srocc << "\n";
  for (const auto& a : r.coral)
    f << "coral," << a.seed << "," << a.lambda_final << ","
      << a.final_cov_distance << "," << a.hdr_srocc << "\n";
  f << "median,,," << r.median_cov_baseline << "," << r.median_srocc_baseline
    << "\n";
  f << "median_coral,,," << r.median_cov_coral << "," << r.median_srocc_coral
    << "\n";
}

bool source_only_equivalent(const ExperimentConfig& cfg) {
  const Datasets data = make_datasets(cfg);
  Rng init_rng = Rng::substream(cfg.seed, "init");
  const QualityNetParams init = init_params(cfg.net, init_rng);

  TrainConfig da_cfg = base_train_config(cfg, cfg.seed);
  da_cfg.lambda = 0.0;
  da_cfg.beta = 0.0;
  const TrainResult da_run = train(da_cfg, data.source, &data.target, init);

  TrainConfig solo_cfg = base_train_config(cfg, cfg.seed);
  solo_cfg.da_mode = DaMode::None;
  solo_cfg.lambda = 0.0;
  solo_cfg.beta = 0.0;
  const TrainResult solo = train(solo_cfg, data.source, nullptr, init);

  return params_equal_bitwise(da_run.params, solo.params);
}

}  // namespace puiq
