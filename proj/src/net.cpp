#include "puiq/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace puiq {

int QualityNetParams::patch_size() const {
  const int in = input_dim();
  const int p = static_cast<int>(std::lround(std::sqrt(double(in))));
  if (p * p != in)
    throw ConfigError("input width is not a square patch size");
  return p;
}

void QualityNetParams::check_finite() const {
  auto ok = [](const Dense& d) {
    return d.W.allFinite() && d.b.allFinite();
  };
  for (const auto& l : feature_layers)
    if (!ok(l)) throw ConfigError("non-finite feature-layer parameters");
  if (!ok(score_head) || !ok(weight_head))
    throw ConfigError("non-finite head parameters");
}

namespace {

Dense init_dense(int out, int in, Rng& rng) {
  // Xavier-uniform.
  const double a = std::sqrt(6.0 / (in + out));
  Dense d;
  d.W.resize(out, in);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) d.W(r, c) = rng.uniform(-a, a);
  d.b = Eigen::VectorXd::Zero(out);
  return d;
}

std::size_t shape_tag_of(const QualityNetParams& p) {
  std::size_t h = 1469598103934665603ULL;
  auto mix = [&h](std::size_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  for (const auto& l : p.feature_layers) {
    mix(static_cast<std::size_t>(l.W.rows()));
    mix(static_cast<std::size_t>(l.W.cols()));
  }
  mix(static_cast<std::size_t>(p.coral_features == CoralFeatureMode::RefDist));
  return h;
}

}  // namespace

QualityNetParams init_params(const NetConfig& cfg, Rng& rng) {
  if (cfg.feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  QualityNetParams p;
  p.coral_features = cfg.coral_features;
  int in = cfg.patch_size * cfg.patch_size;
  for (int h : cfg.hidden) {
    p.feature_layers.push_back(init_dense(h, in, rng));
    in = h;
  }
  p.feature_layers.push_back(init_dense(cfg.feature_dim, in, rng));
  p.score_head = init_dense(1, cfg.feature_dim, rng);
  p.weight_head = init_dense(1, cfg.feature_dim, rng);
  return p;
}

namespace {

// Forward through the extractor, keeping every activation (index 0 = input).
std::vector<Eigen::MatrixXd> extract(const QualityNetParams& p,
                                     const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(p.feature_layers.size() + 1);
  acts.push_back(x);
  for (const auto& layer : p.feature_layers) {
    Eigen::MatrixXd z =
        (acts.back() * layer.W.transpose()).rowwise() + layer.b.transpose();
    acts.push_back(z.array().tanh().matrix());
  }
  return acts;
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ForwardResult forward(const QualityNetParams& params, const PatchBatch& batch,
                      DomainTag tag) {
  if (batch.ref_patches.cols() != params.input_dim())
    throw ConfigError("patch width " + std::to_string(batch.ref_patches.cols()) +
                      " does not match net input " +
                      std::to_string(params.input_dim()));
  const Eigen::Index n = batch.ref_patches.rows();

  ForwardResult res;
  res.cache.acts_ref = extract(params, batch.ref_patches);
  res.cache.acts_dist = extract(params, batch.dist_patches);
  const Eigen::MatrixXd& f_ref = res.cache.acts_ref.back();
  const Eigen::MatrixXd& f_dist = res.cache.acts_dist.back();
  res.cache.delta = f_ref - f_dist;

  res.cache.scores = (res.cache.delta * params.score_head.W.transpose()).col(0);
  res.cache.scores.array() += params.score_head.b(0);
  res.cache.weight_pre =
      (res.cache.delta * params.weight_head.W.transpose()).col(0);
  res.cache.weight_pre.array() += params.weight_head.b(0);
  res.cache.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    res.cache.weights(i) = softplus(res.cache.weight_pre(i)) + kWeightEps;

  res.cache.sum_w = res.cache.weights.sum();
  res.cache.quality =
      res.cache.weights.dot(res.cache.scores) / res.cache.sum_w;
  res.cache.shape_tag = shape_tag_of(params);

  res.quality = res.cache.quality;
  res.patch_scores = res.cache.scores;
  res.patch_weights = res.cache.weights;

  if (params.coral_features == CoralFeatureMode::RefDist) {
    res.features.features.resize(2 * n, f_ref.cols());
    res.features.features.topRows(n) = f_ref;
    res.features.features.bottomRows(n) = f_dist;
  } else {
    res.features.features = f_ref;
  }
  res.features.domain_tag = tag;
  return res;
}

NetGrads NetGrads::zeros_like(const QualityNetParams& p) {
  NetGrads g;
  for (const auto& l : p.feature_layers)
    g.feature_layers.push_back(
        Dense{Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
              Eigen::VectorXd::Zero(l.b.size())});
  auto zero_head = [](const Dense& d) {
    return Dense{Eigen::MatrixXd::Zero(d.W.rows(), d.W.cols()),
                 Eigen::VectorXd::Zero(d.b.size())};
  };
  g.score_head = zero_head(p.score_head);
  g.weight_head = zero_head(p.weight_head);
  return g;
}

void NetGrads::add_scaled(const NetGrads& other, double s) {
  for (std::size_t i = 0; i < feature_layers.size(); ++i) {
    feature_layers[i].W += s * other.feature_layers[i].W;
    feature_layers[i].b += s * other.feature_layers[i].b;
  }
  score_head.W += s * other.score_head.W;
  score_head.b += s * other.score_head.b;
  weight_head.W += s * other.weight_head.W;
  weight_head.b += s * other.weight_head.b;
}

double NetGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& l : feature_layers)
    s += l.W.squaredNorm() + l.b.squaredNorm();
  s += score_head.W.squaredNorm() + score_head.b.squaredNorm();
  s += weight_head.W.squaredNorm() + weight_head.b.squaredNorm();
  return s;
}

namespace {

// Backprop dA at layer `acts.back()` through the extractor, accumulating
// weight gradients.
void backprop_extractor(const QualityNetParams& p,
                        const std::vector<Eigen::MatrixXd>& acts,
                        Eigen::MatrixXd d_out, NetGrads& g) {
  for (int li = static_cast<int>(p.feature_layers.size()) - 1; li >= 0; --li) {
    const Eigen::MatrixXd& a = acts[static_cast<std::size_t>(li + 1)];
    // tanh' = 1 - a^2
    Eigen::MatrixXd dz =
        (d_out.array() * (1.0 - a.array().square())).matrix();
    g.feature_layers[static_cast<std::size_t>(li)].W +=
        dz.transpose() * acts[static_cast<std::size_t>(li)];
    g.feature_layers[static_cast<std::size_t>(li)].b +=
        dz.colwise().sum().transpose();
    if (li > 0) d_out = dz * p.feature_layers[static_cast<std::size_t>(li)].W;
  }
}

}  // namespace

void backward(const QualityNetParams& params, const ForwardCache& cache,
              double d_quality, const Eigen::MatrixXd& d_features,
              NetGrads& out) {
  if (cache.shape_tag != shape_tag_of(params))
    throw StateError("forward cache does not match the given parameters");
  const Eigen::Index n = cache.scores.size();

  // Pooling: q = sum(w s) / sum(w).
  Eigen::VectorXd ds = d_quality * cache.weights / cache.sum_w;
  Eigen::VectorXd dw =
      d_quality * (cache.scores.array() - cache.quality).matrix() / cache.sum_w;

  // Heads.
  out.score_head.W += ds.transpose() * cache.delta;
  out.score_head.b(0) += ds.sum();
  Eigen::VectorXd du(n);
  for (Eigen::Index i = 0; i < n; ++i)
    du(i) = dw(i) * logistic(cache.weight_pre(i));
  out.weight_head.W += du.transpose() * cache.delta;
  out.weight_head.b(0) += du.sum();

  Eigen::MatrixXd d_delta = ds * params.score_head.W + du * params.weight_head.W;

  Eigen::MatrixXd d_ref = d_delta;
  Eigen::MatrixXd d_dist = -d_delta;
  if (d_features.size() != 0) {
    const bool ref_dist = params.coral_features == CoralFeatureMode::RefDist;
    const Eigen::Index want = ref_dist ? 2 * n : n;
    if (d_features.rows() != want || d_features.cols() != d_delta.cols())
      throw DimensionError("feature gradient shape mismatch");
    d_ref += d_features.topRows(n);
    if (ref_dist) d_dist += d_features.bottomRows(n);
  }

  backprop_extractor(params, cache.acts_ref, std::move(d_ref), out);
  backprop_extractor(params, cache.acts_dist, std::move(d_dist), out);
}

Eigen::MatrixXd covariance(const FeatureBatch& f) {
  const Eigen::Index n = f.features.rows();
  if (n < 2) throw Error("covariance requires at least 2 rows");
  if (!f.features.allFinite()) throw Error("non-finite feature entries");
  const Eigen::MatrixXd centered =
      f.features.rowwise() - f.features.colwise().mean();
  return centered.transpose() * centered / double(n - 1);
}

CoralResult coral_loss(const FeatureBatch& f_s, const FeatureBatch& f_t) {
  if (f_s.features.cols() != f_t.features.cols())
    throw DimensionError("feature dimensions differ: " +
                         std::to_string(f_s.features.cols()) + " vs " +
                         std::to_string(f_t.features.cols()));
  const double d = static_cast<double>(f_s.features.cols());
  const Eigen::MatrixXd cs = covariance(f_s);
  const Eigen::MatrixXd ct = covariance(f_t);
  const Eigen::MatrixXd diff = cs - ct;

  CoralResult res;
  res.loss = diff.squaredNorm() / (4.0 * d * d);

  // dL/dC_S = diff / (2 d^2); C = Xc^T Xc / (n-1); centering projection is a
  // no-op on Xc * G because Xc has zero column means.
  const Eigen::MatrixXd g = diff / (2.0 * d * d);
  {
    const Eigen::Index n = f_s.features.rows();
    const Eigen::MatrixXd centered =
        f_s.features.rowwise() - f_s.features.colwise().mean();
    res.grad_source = 2.0 * centered * g / double(n - 1);
  }
  {
    const Eigen::Index n = f_t.features.rows();
    const Eigen::MatrixXd centered =
        f_t.features.rowwise() - f_t.features.colwise().mean();
    res.grad_target = -2.0 * centered * g / double(n - 1);
  }
  return res;
}

MaeResult mae_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label) {
  if (pred.size() == 0) throw DomainError("mae_loss on empty input");
  if (pred.size() != label.size())
    throw DimensionError("mae_loss length mismatch");
  const Eigen::Index n = pred.size();
  MaeResult res;
  res.grads.resize(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = pred(i) - label(i);
    acc += std::abs(e);
    res.grads(i) = e > 0.0 ? 1.0 / double(n) : (e < 0.0 ? -1.0 / double(n) : 0.0);
  }
  res.loss = acc / double(n);
  return res;
}

double total_loss(double l_sdr, double l_hdr, double l_coral, double alpha,
                  double beta, double lambda) {
  if (alpha < 0.0 || beta < 0.0 || lambda < 0.0)
    throw ConfigError("loss weights must be non-negative");
  return alpha * l_sdr + beta * l_hdr + lambda * l_coral;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[4] = {'P', 'U', 'I', 'Q'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}
std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
double get_f64(std::istream& is) {
  const std::uint64_t u = get_u64(is);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name,
                  const Eigen::MatrixXd& m) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, 2);
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
}

void write_vector(std::ostream& os, const std::string& name,
                  const Eigen::VectorXd& v) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, 1);
  put_u64(os, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v(i));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const QualityNetParams& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  const std::uint32_t ntensors =
      static_cast<std::uint32_t>(2 * params.feature_layers.size() + 4 + 1);
  put_u32(f, ntensors);
  Eigen::VectorXd meta(1);
  meta(0) = params.coral_features == CoralFeatureMode::RefDist ? 1.0 : 0.0;
  write_vector(f, "meta.coral_refdist", meta);
  for (std::size_t i = 0; i < params.feature_layers.size(); ++i) {
    const std::string base = "feature." + std::to_string(i);
    write_tensor(f, base + ".W", params.feature_layers[i].W);
    write_vector(f, base + ".b", params.feature_layers[i].b);
  }
  write_tensor(f, "score.W", params.score_head.W);
  write_vector(f, "score.b", params.score_head.b);
  write_tensor(f, "weight.W", params.weight_head.W);
  write_vector(f, "weight.b", params.weight_head.b);
  if (!f) throw DataError("checkpoint write failed: " + path.string());
}

QualityNetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path.string() + ": bad checkpoint magic");
  if (get_u32(f) != kVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version");
  const std::uint32_t ntensors = get_u32(f);

  std::map<std::string, Eigen::MatrixXd> tensors;
  for (std::uint32_t t = 0; t < ntensors; ++t) {
    const std::uint32_t name_len = get_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(f);
    if (rank != 1 && rank != 2)
      throw ParseError(path.string() + ": unsupported tensor rank");
    const std::uint64_t rows = get_u64(f);
    const std::uint64_t cols = rank == 2 ? get_u64(f) : 1;
    Eigen::MatrixXd m(rows, cols);
    for (std::uint64_t r = 0; r < rows; ++r)
      for (std::uint64_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            get_f64(f);
    tensors[name] = std::move(m);
  }

  auto need = [&](const std::string& name) -> const Eigen::MatrixXd& {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ParseError(path.string() + ": missing tensor " + name);
    return it->second;
  };

  QualityNetParams p;
  p.coral_features = need("meta.coral_refdist")(0, 0) != 0.0
                         ? CoralFeatureMode::RefDist
                         : CoralFeatureMode::RefOnly;
  for (std::size_t i = 0;; ++i) {
    const std::string base = "feature." + std::to_string(i);
    if (!tensors.count(base + ".W")) break;
    p.feature_layers.push_back(Dense{need(base + ".W"), need(base + ".b").col(0)});
  }
  if (p.feature_layers.empty())
    throw ParseError(path.string() + ": checkpoint has no feature layers");
  p.score_head = Dense{need("score.W"), need("score.b").col(0)};
  p.weight_head = Dense{need("weight.W"), need("weight.b").col(0)};
  p.check_finite();
  return p;
}

}  // namespace puiq
