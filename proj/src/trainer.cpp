#include "puiq/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "puiq/patches.hpp"
#include "puiq/pipeline.hpp"

namespace puiq {

DaMode da_mode_from_string(std::string_view s) {
  if (s == "none") return DaMode::None;
  if (s == "s_to_hu") return DaMode::S_to_HU;
  if (s == "s_to_hs") return DaMode::S_to_HS;
  if (s == "s_to_hl") return DaMode::S_to_HL;
  throw ConfigError("unknown da_mode: " + std::string(s));
}

std::string to_string(DaMode m) {
  switch (m) {
    case DaMode::None: return "none";
    case DaMode::S_to_HU: return "s_to_hu";
    case DaMode::S_to_HS: return "s_to_hs";
    case DaMode::S_to_HL: return "s_to_hl";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (alpha < 0 || beta < 0 || lambda < 0)
    throw ConfigError("loss weights must be non-negative");
  if (epochs < 1 || batch_images < 1 || patches_per_image < 1)
    throw ConfigError("epochs, batch_images and patches_per_image must be >= 1");
  if (!(lr_initial > 0) || !(lr_final > 0))
    throw ConfigError("learning rates must be positive");
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  TrainConfig c;
  if (j.contains("da_mode")) c.da_mode = da_mode_from_string(j.at("da_mode").get<std::string>());
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("lambda_auto")) c.lambda_auto = j.at("lambda_auto").get<bool>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_images")) c.batch_images = j.at("batch_images").get<int>();
  if (j.contains("patches_per_image")) c.patches_per_image = j.at("patches_per_image").get<int>();
  if (j.contains("eval_patches")) c.eval_patches = j.at("eval_patches").get<int>();
  if (j.contains("lr_initial")) c.lr_initial = j.at("lr_initial").get<double>();
  if (j.contains("lr_final")) c.lr_final = j.at("lr_final").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("scheme")) c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  if (j.contains("net")) {
    const auto& n = j.at("net");
    if (n.contains("patch_size")) c.net.patch_size = n.at("patch_size").get<int>();
    if (n.contains("hidden")) c.net.hidden = n.at("hidden").get<std::vector<int>>();
    if (n.contains("feature_dim")) c.net.feature_dim = n.at("feature_dim").get<int>();
    if (n.contains("coral_features"))
      c.net.coral_features = n.at("coral_features").get<std::string>() == "ref_only"
                                 ? CoralFeatureMode::RefOnly
                                 : CoralFeatureMode::RefDist;
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open train config " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string TrainConfig::to_json_text() const {
  nlohmann::json j;
  j["da_mode"] = to_string(da_mode);
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["lambda"] = lambda;
  j["lambda_auto"] = lambda_auto;
  j["epochs"] = epochs;
  j["batch_images"] = batch_images;
  j["patches_per_image"] = patches_per_image;
  j["eval_patches"] = eval_patches;
  j["lr_initial"] = lr_initial;
  j["lr_final"] = lr_final;
  j["seed"] = seed;
  j["scheme"] = scheme == NormScheme::Pmax   ? "pmax"
                : scheme == NormScheme::Div255 ? "255"
                                               : "none";
  j["net"]["patch_size"] = net.patch_size;
  j["net"]["hidden"] = net.hidden;
  j["net"]["feature_dim"] = net.feature_dim;
  j["net"]["coral_features"] =
      net.coral_features == CoralFeatureMode::RefOnly ? "ref_only" : "ref_dist";
  return j.dump(2);
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << "epoch,l_sdr,l_hdr,l_coral,total,lr,lambda,cov_distance\n";
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    f << i + 1 << "," << e.l_sdr << "," << e.l_hdr << "," << e.l_coral << ","
      << e.total << "," << e.lr << "," << e.lambda << "," << e.cov_distance
      << "\n";
  }
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double lambda_autoscale(std::span<const IterLossRecord> window, double alpha,
                        double beta, double current_lambda) {
  if (window.empty()) return current_lambda;
  std::vector<double> task, coral;
  task.reserve(window.size());
  coral.reserve(window.size());
  for (const auto& r : window) {
    task.push_back(alpha * r.l_sdr + beta * r.l_hdr);
    coral.push_back(r.l_coral);
  }
  const double med_coral = median_of(std::move(coral));
  if (med_coral <= 0.0) return current_lambda;
  return std::clamp(median_of(std::move(task)) / med_coral, 1e-6, 1e6);
}

AdamW::AdamW(const QualityNetParams& shape, double weight_decay)
    : m_(NetGrads::zeros_like(shape)),
      v_(NetGrads::zeros_like(shape)),
      weight_decay_(weight_decay) {}

namespace {

void adamw_tensor(Eigen::Ref<Eigen::MatrixXd> p, Eigen::Ref<Eigen::MatrixXd> m,
                  Eigen::Ref<Eigen::MatrixXd> v,
                  const Eigen::Ref<const Eigen::MatrixXd>& g, double lr,
                  double bc1, double bc2, double wd) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v.array().matrix() + (1.0 - kBeta2) * g.array().square().matrix();
  const auto mhat = m.array() / bc1;
  const auto vhat = v.array() / bc2;
  p.array() -= lr * (mhat / (vhat.sqrt() + kEps) + wd * p.array());
}

}  // namespace

void AdamW::step(QualityNetParams& params, const NetGrads& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(0.9, double(t_));
  const double bc2 = 1.0 - std::pow(0.999, double(t_));
  for (std::size_t i = 0; i < params.feature_layers.size(); ++i) {
    adamw_tensor(params.feature_layers[i].W, m_.feature_layers[i].W,
                 v_.feature_layers[i].W, grads.feature_layers[i].W, lr, bc1,
                 bc2, weight_decay_);
    adamw_tensor(params.feature_layers[i].b, m_.feature_layers[i].b,
                 v_.feature_layers[i].b, grads.feature_layers[i].b, lr, bc1,
                 bc2, weight_decay_);
  }
  adamw_tensor(params.score_head.W, m_.score_head.W, v_.score_head.W,
               grads.score_head.W, lr, bc1, bc2, weight_decay_);
  adamw_tensor(params.score_head.b, m_.score_head.b, v_.score_head.b,
               grads.score_head.b, lr, bc1, bc2, weight_decay_);
  adamw_tensor(params.weight_head.W, m_.weight_head.W, v_.weight_head.W,
               grads.weight_head.W, lr, bc1, bc2, weight_decay_);
  adamw_tensor(params.weight_head.b, m_.weight_head.b, v_.weight_head.b,
               grads.weight_head.b, lr, bc1, bc2, weight_decay_);
}

namespace {

struct LoadedRecord {
  const Grid* ref = nullptr;
  const Grid* dist = nullptr;
  std::optional<double> label;
};

struct DomainData {
  std::vector<LoadedRecord> records;
  bool labeled = false;
};

DomainData preload(const DatasetManifest& m, EncodedCache& cache,
                   bool need_labels, const char* role) {
  if (m.records.empty())
    throw DataError(std::string(role) + " manifest is empty");
  DomainData d;
  d.labeled = true;
  for (const auto& rec : m.records) {
    LoadedRecord lr;
    try {
      lr.ref = &cache.get(m.resolve(rec.ref_path));
      lr.dist = &cache.get(m.resolve(rec.dist_path));
    } catch (const Error& e) {
      throw DataError(std::string(role) + " record unreadable: " + e.what());
    }
    lr.label = rec.label;
    if (!rec.label) d.labeled = false;
    d.records.push_back(lr);
  }
  if (need_labels && !d.labeled)
    throw DataError(std::string(role) + " manifest must be fully labeled");
  return d;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetManifest& source,
                  const DatasetManifest* target, QualityNetParams init) {
  TrainConfig cfg = config;
  cfg.validate();
  if (cfg.da_mode == DaMode::S_to_HU) cfg.beta = 0.0;  // no target labels
  const bool use_target = cfg.da_mode != DaMode::None;
  if (use_target && target == nullptr)
    throw ConfigError("da_mode requires a target manifest");

  for (const auto& rec : source.records)
    if (rec.domain != Domain::SDR)
      throw DataError("source manifest must be SDR-tagged");

  EncodedCache cache(cfg.scheme, DisplayModel::sdr());
  const DomainData src = preload(source, cache, /*need_labels=*/true, "source");
  DomainData tgt;
  if (use_target) {
    const bool need_labels =
        cfg.da_mode == DaMode::S_to_HS || cfg.da_mode == DaMode::S_to_HL;
    tgt = preload(*target, cache, need_labels, "target");
  }

  Rng src_order_rng = Rng::substream(cfg.seed, "source-order");
  Rng src_jitter_rng = Rng::substream(cfg.seed, "source-jitter");
  Rng tgt_order_rng = Rng::substream(cfg.seed, "target-order");
  Rng tgt_jitter_rng = Rng::substream(cfg.seed, "target-jitter");

  QualityNetParams params = std::move(init);
  AdamW opt(params);
  double lambda = cfg.lambda;

  TrainResult result;
  const std::size_t n_src = src.records.size();
  const std::size_t iters_per_epoch =
      (n_src + static_cast<std::size_t>(cfg.batch_images) - 1) /
      static_cast<std::size_t>(cfg.batch_images);

  std::vector<std::size_t> src_idx(n_src), tgt_idx;
  for (std::size_t i = 0; i < n_src; ++i) src_idx[i] = i;
  if (use_target) {
    tgt_idx.resize(tgt.records.size());
    for (std::size_t i = 0; i < tgt_idx.size(); ++i) tgt_idx[i] = i;
  }
  std::size_t tgt_cursor = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.lr_initial *
        std::pow(cfg.lr_final / cfg.lr_initial, double(epoch) / cfg.epochs);

    shuffle_indices(src_idx, src_order_rng);
    if (use_target) shuffle_indices(tgt_idx, tgt_order_rng);

    std::vector<IterLossRecord> iter_records;
    iter_records.reserve(iters_per_epoch);
    double cov_sum = 0.0;
    long cov_count = 0;

    for (std::size_t it = 0; it < iters_per_epoch; ++it) {
      const std::size_t begin = it * static_cast<std::size_t>(cfg.batch_images);
      const std::size_t end =
          std::min(n_src, begin + static_cast<std::size_t>(cfg.batch_images));
      const std::size_t bsz = end - begin;

      NetGrads grads = NetGrads::zeros_like(params);
      IterLossRecord rec;

      // --- source batch
      std::vector<ForwardResult> src_fwd;
      src_fwd.reserve(bsz);
      Eigen::VectorXd src_pred(bsz), src_label(bsz);
      for (std::size_t j = 0; j < bsz; ++j) {
        const LoadedRecord& lr_rec = src.records[src_idx[begin + j]];
        const PatchBatch batch =
            sample_patches(*lr_rec.ref, *lr_rec.dist, cfg.patches_per_image,
                           cfg.net.patch_size, src_jitter_rng);
        src_fwd.push_back(forward(params, batch, DomainTag::Source));
        src_pred(static_cast<Eigen::Index>(j)) = src_fwd.back().quality;
        src_label(static_cast<Eigen::Index>(j)) = *lr_rec.label;
      }
      const MaeResult src_mae = mae_loss(src_pred, src_label);
      rec.l_sdr = src_mae.loss;

      // --- target batch
      std::vector<ForwardResult> tgt_fwd;
      Eigen::VectorXd tgt_pred, tgt_label;
      MaeResult tgt_mae;
      const bool target_labeled_loss = use_target && cfg.beta > 0 && tgt.labeled;
      if (use_target) {
        tgt_fwd.reserve(bsz);
        tgt_pred.resize(bsz);
        tgt_label.resize(bsz);
        for (std::size_t j = 0; j < bsz; ++j) {
          const LoadedRecord& lr_rec =
              tgt.records[tgt_idx[(tgt_cursor + j) % tgt_idx.size()]];
          const PatchBatch batch =
              sample_patches(*lr_rec.ref, *lr_rec.dist, cfg.patches_per_image,
                             cfg.net.patch_size, tgt_jitter_rng);
          tgt_fwd.push_back(forward(params, batch, DomainTag::Target));
          tgt_pred(static_cast<Eigen::Index>(j)) = tgt_fwd.back().quality;
          tgt_label(static_cast<Eigen::Index>(j)) =
              lr_rec.label ? *lr_rec.label : 0.0;
        }
        tgt_cursor = (tgt_cursor + bsz) % tgt_idx.size();
        if (target_labeled_loss) {
          tgt_mae = mae_loss(tgt_pred, tgt_label);
          rec.l_hdr = tgt_mae.loss;
        }
      }

      // --- CORAL between stacked per-domain feature batches
      CoralResult coral;
      Eigen::Index feat_rows_per_img = 0;
      if (use_target) {
        feat_rows_per_img = src_fwd.front().features.features.rows();
        FeatureBatch fs, ft;
        fs.domain_tag = DomainTag::Source;
        ft.domain_tag = DomainTag::Target;
        const Eigen::Index d = src_fwd.front().features.features.cols();
        fs.features.resize(feat_rows_per_img * static_cast<Eigen::Index>(bsz), d);
        ft.features.resize(feat_rows_per_img * static_cast<Eigen::Index>(bsz), d);
        for (std::size_t j = 0; j < bsz; ++j) {
          fs.features.middleRows(
              static_cast<Eigen::Index>(j) * feat_rows_per_img,
              feat_rows_per_img) = src_fwd[j].features.features;
          ft.features.middleRows(
              static_cast<Eigen::Index>(j) * feat_rows_per_img,
              feat_rows_per_img) = tgt_fwd[j].features.features;
        }
        coral = coral_loss(fs, ft);
        rec.l_coral = coral.loss;
        cov_sum += (covariance(fs) - covariance(ft)).norm();
        ++cov_count;
      }

      const double total = total_loss(rec.l_sdr, rec.l_hdr, rec.l_coral,
                                      cfg.alpha, cfg.beta, lambda);
      if (!std::isfinite(total))
        throw Error("training diverged (non-finite loss) at epoch " +
                    std::to_string(epoch + 1) + " iteration " +
                    std::to_string(it + 1));

      // --- backward
      const bool coral_backprop = use_target && lambda > 0;
      for (std::size_t j = 0; j < bsz; ++j) {
        Eigen::MatrixXd dfeat;
        if (coral_backprop)
          dfeat = lambda * coral.grad_source.middleRows(
                               static_cast<Eigen::Index>(j) * feat_rows_per_img,
                               feat_rows_per_img);
        backward(params, src_fwd[j].cache,
                 cfg.alpha * src_mae.grads(static_cast<Eigen::Index>(j)), dfeat,
                 grads);
      }
      if (use_target && (coral_backprop || target_labeled_loss)) {
        for (std::size_t j = 0; j < bsz; ++j) {
          Eigen::MatrixXd dfeat;
          if (coral_backprop)
            dfeat = lambda * coral.grad_target.middleRows(
                                 static_cast<Eigen::Index>(j) * feat_rows_per_img,
                                 feat_rows_per_img);
          const double dq =
              target_labeled_loss
                  ? cfg.beta * tgt_mae.grads(static_cast<Eigen::Index>(j))
                  : 0.0;
          backward(params, tgt_fwd[j].cache, dq, dfeat, grads);
        }
      }

      opt.step(params, grads, lr);
      iter_records.push_back(rec);
    }

    EpochRecord er;
    for (const auto& r : iter_records) {
      er.l_sdr += r.l_sdr;
      er.l_hdr += r.l_hdr;
      er.l_coral += r.l_coral;
    }
    const double ni = double(iter_records.size());
    er.l_sdr /= ni;
    er.l_hdr /= ni;
    er.l_coral /= ni;
    er.lr = lr;
    er.lambda = lambda;
    er.total = total_loss(er.l_sdr, er.l_hdr, er.l_coral, cfg.alpha, cfg.beta,
                          lambda);
    er.cov_distance = cov_count > 0 ? cov_sum / double(cov_count) : 0.0;
    result.history.epochs.push_back(er);

    if (cfg.lambda_auto && use_target)
      lambda = lambda_autoscale(iter_records, cfg.alpha, cfg.beta, lambda);
  }

  result.params = std::move(params);
  result.lambda_final = lambda;
  return result;
}

}  // namespace puiq
