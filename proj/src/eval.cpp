#include "puiq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "puiq/pipeline.hpp"

namespace puiq {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw DomainError("pearson requires at least 3 samples");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DomainError("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = 0.5 * (double(i) + double(j)) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> pred, std::span<const double> label) {
  const auto rp = average_ranks(pred);
  const auto rl = average_ranks(label);
  return pearson(rp, rl);
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double logistic_eval(const LogisticFit& f, double x) {
  const double s = 1.0 / (1.0 + std::exp(-f.b2 * (x - f.b3)));
  return f.b1 * (s - 0.5) + f.b4;
}

}  // namespace

PlccResult plcc_logistic(std::span<const double> pred,
                         std::span<const double> label) {
  if (pred.size() != label.size())
    throw DimensionError("plcc_logistic length mismatch");
  const std::size_t n = pred.size();
  if (n < 5) throw DomainError("plcc_logistic requires at least 5 samples");
  {
    const double y0 = label[0];
    if (std::all_of(label.begin(), label.end(),
                    [&](double y) { return y == y0; }))
      throw DomainError("plcc_logistic: constant labels");
  }

  // Initialization from data ranges and medians.
  const auto [pmin_it, pmax_it] = std::minmax_element(pred.begin(), pred.end());
  const auto [lmin_it, lmax_it] = std::minmax_element(label.begin(), label.end());
  double sx = 0;
  {
    const double mx = std::accumulate(pred.begin(), pred.end(), 0.0) / double(n);
    for (double v : pred) sx += (v - mx) * (v - mx);
    sx = std::sqrt(sx / double(n));
  }
  double corr_sign = 1.0;
  try {
    corr_sign = pearson(pred, label) < 0 ? -1.0 : 1.0;
  } catch (const DomainError&) {
    corr_sign = 1.0;
  }

  LogisticFit fit;
  fit.b1 = *lmax_it - *lmin_it;
  if (fit.b1 == 0.0) fit.b1 = 1.0;
  fit.b2 = corr_sign / (sx > 0 ? sx : 1.0);
  fit.b3 = median_of(std::vector<double>(pred.begin(), pred.end()));
  fit.b4 = std::accumulate(label.begin(), label.end(), 0.0) / double(n);

  // Damped Gauss-Newton (Levenberg-Marquardt) on the residual sum of squares.
  auto sse = [&](const LogisticFit& f) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = logistic_eval(f, pred[i]) - label[i];
      s += r * r;
    }
    return s;
  };

  double mu = 1e-3;
  double cur = sse(fit);
  bool converged = false;
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-fit.b2 * (pred[i] - fit.b3)));
      const double ds = s * (1.0 - s);
      Eigen::Vector4d j;
      j << s - 0.5, fit.b1 * ds * (pred[i] - fit.b3), -fit.b1 * ds * fit.b2,
          1.0;
      const double r = fit.b1 * (s - 0.5) + fit.b4 - label[i];
      jtj += j * j.transpose();
      jtr += j * r;
    }
    Eigen::Matrix4d damped = jtj;
    damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
    LogisticFit trial = fit;
    trial.b1 += step(0);
    trial.b2 += step(1);
    trial.b3 += step(2);
    trial.b4 += step(3);
    const double trial_sse = sse(trial);
    if (std::isfinite(trial_sse) && trial_sse <= cur) {
      const double rel = (cur - trial_sse) / std::max(cur, 1e-300);
      fit = trial;
      cur = trial_sse;
      mu = std::max(mu * 0.5, 1e-12);
      if (rel < 1e-12) {
        converged = true;
        break;
      }
    } else {
      mu *= 4.0;
      if (mu > 1e12) break;
    }
  }
  fit.converged = converged;

  PlccResult res;
  res.fit = fit;
  if (converged) {
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = logistic_eval(fit, pred[i]);
    try {
      res.plcc = pearson(mapped, label);
      return res;
    } catch (const DomainError&) {
      res.fit.converged = false;
    }
  }
  res.plcc = pearson(pred, label);  // fallback, flagged by fit.converged
  return res;
}

// ---------------------------------------------------------------------------
// Fold splitting

namespace {

std::uint64_t content_hash(const DatasetManifest& m, const std::string& ref) {
  const auto path = m.resolve(ref);
  std::ifstream f(path, std::ios::binary);
  if (f) {
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
  }
  // Splitter usable on path-only manifests.
  return fnv1a64(ref.data(), ref.size());
}

struct RefGroup {
  std::vector<std::size_t> records;
  Domain domain = Domain::SDR;
};

}  // namespace

std::vector<Fold> split_folds(const DatasetManifest& manifest, int k,
                              std::array<double, 3> ratios, Rng& rng) {
  if (k < 2) throw ConfigError("split_folds requires k >= 2");
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  const int val_chunks = static_cast<int>(std::lround(ratios[1] * k));
  const int test_chunks = static_cast<int>(std::lround(ratios[2] * k));
  if (val_chunks < 1 || test_chunks < 1 || val_chunks + test_chunks >= k)
    throw ConfigError("split ratios incompatible with fold count");

  // Merge references by content hash; all their records travel together.
  std::map<std::uint64_t, RefGroup> groups;
  std::vector<std::uint64_t> group_order;  // first-seen order
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    const std::uint64_t h = content_hash(manifest, rec.ref_path);
    auto it = groups.find(h);
    if (it == groups.end()) {
      it = groups.emplace(h, RefGroup{{}, rec.domain}).first;
      group_order.push_back(h);
    }
    it->second.records.push_back(i);
  }
  if (static_cast<int>(groups.size()) < k)
    throw DataError("fewer unique references (" +
                    std::to_string(groups.size()) + ") than folds (" +
                    std::to_string(k) + ")");

  // Stratify: shuffle each domain's groups, deal round-robin into k chunks.
  std::vector<std::vector<const RefGroup*>> chunks(static_cast<std::size_t>(k));
  for (Domain dom : {Domain::SDR, Domain::HDR}) {
    std::vector<const RefGroup*> doms;
    for (std::uint64_t h : group_order)
      if (groups.at(h).domain == dom) doms.push_back(&groups.at(h));
    // Fisher-Yates
    for (std::size_t i = doms.size(); i > 1; --i)
      std::swap(doms[i - 1], doms[rng.uniform_int(i)]);
    for (std::size_t i = 0; i < doms.size(); ++i)
      chunks[i % static_cast<std::size_t>(k)].push_back(doms[i]);
  }

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto chunk_role = [&](int c) {
      const int offset = ((c - f) % k + k) % k;
      if (offset < test_chunks) return 2;             // test
      if (offset < test_chunks + val_chunks) return 1;  // val
      return 0;                                       // train
    };
    for (int c = 0; c < k; ++c) {
      auto& dst = chunk_role(c) == 2   ? folds[static_cast<std::size_t>(f)].test
                  : chunk_role(c) == 1 ? folds[static_cast<std::size_t>(f)].val
                                       : folds[static_cast<std::size_t>(f)].train;
      for (const RefGroup* g : chunks[static_cast<std::size_t>(c)])
        dst.insert(dst.end(), g->records.begin(), g->records.end());
    }
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Learned-metric evaluation

std::string to_string(SubsetTag t) {
  switch (t) {
    case SubsetTag::Full: return "full";
    case SubsetTag::SDR: return "sdr";
    case SubsetTag::HDR: return "hdr";
  }
  return "?";
}

std::vector<double> predict_records(const QualityNetParams& params,
                                    const DatasetManifest& manifest,
                                    const EvalConfig& cfg) {
  EncodedCache cache(cfg.scheme, cfg.display);
  // Sequential preload; scoring is then safely parallel.
  for (const auto& rec : manifest.records) {
    cache.get(manifest.resolve(rec.ref_path));
    cache.get(manifest.resolve(rec.dist_path));
  }
  std::vector<double> preds(manifest.records.size());
  parallel_for(0, static_cast<std::int64_t>(manifest.records.size()),
               [&](std::int64_t i) {
                 const auto& rec = manifest.records[static_cast<std::size_t>(i)];
                 const Grid& ref = cache.get(manifest.resolve(rec.ref_path));
                 const Grid& dist = cache.get(manifest.resolve(rec.dist_path));
                 Rng rng = Rng::substream(
                     cfg.seed, "eval-record-" + std::to_string(i));
                 const PatchBatch batch = sample_patches(
                     ref, dist, cfg.patches, cfg.patch_size, rng);
                 preds[static_cast<std::size_t>(i)] =
                     forward(params, batch).quality;
               });
  return preds;
}

std::vector<EvalReport> evaluate(const QualityNetParams& params,
                                 const DatasetManifest& manifest,
                                 const EvalConfig& cfg) {
  const std::vector<double> preds = predict_records(params, manifest, cfg);

  auto report_for = [&](SubsetTag tag) -> std::optional<EvalReport> {
    std::vector<double> p, l;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const auto& rec = manifest.records[i];
      if (!rec.label) continue;
      if (tag == SubsetTag::SDR && rec.domain != Domain::SDR) continue;
      if (tag == SubsetTag::HDR && rec.domain != Domain::HDR) continue;
      p.push_back(preds[i]);
      l.push_back(*rec.label);
    }
    if (p.size() < 3) return std::nullopt;
    EvalReport r;
    r.subset = tag;
    r.n = static_cast<int>(p.size());
    r.srocc = srocc(p, l);
    if (p.size() >= 5) {
      const PlccResult pl = plcc_logistic(p, l);
      r.plcc = pl.plcc;
      r.fit_converged = pl.fit.converged;
    } else {
      r.plcc = pearson(p, l);
      r.fit_converged = false;
    }
    return r;
  };

  std::vector<EvalReport> out;
  for (SubsetTag tag : {SubsetTag::Full, SubsetTag::SDR, SubsetTag::HDR})
    if (auto r = report_for(tag)) out.push_back(*r);
  if (out.empty())
    throw DataError("no subset with at least 3 labeled records");
  return out;
}

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalReport>& reports) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << "subset,fold,n,srocc,plcc,fit_flag\n";
  for (const auto& r : reports) {
    f << to_string(r.subset) << ",";
    if (r.fold) f << *r.fold;
    f << "," << r.n << "," << r.srocc << "," << r.plcc << ","
      << (r.fit_converged ? "ok" : "fallback") << "\n";
  }
}

}  // namespace puiq
