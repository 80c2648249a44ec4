#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "puiq/display.hpp"
#include "puiq/io.hpp"
#include "puiq/net.hpp"
#include "puiq/pu.hpp"

namespace puiq {

double pearson(std::span<const double> x, std::span<const double> y);

// Average ranks with mean-rank ties.
std::vector<double> average_ranks(std::span<const double> v);

// Spearman rank-order correlation (Pearson on mean ranks). Throws
// DomainError for constant inputs or length < 3.
double srocc(std::span<const double> pred, std::span<const double> label);

// 4-parameter monotone logistic q(x) = b1*(1/2 - 1/(1+exp(b2*(x-b3)))) + b4.
struct LogisticFit {
  double b1 = 0, b2 = 0, b3 = 0, b4 = 0;
  bool converged = false;
};

struct PlccResult {
  double plcc = 0.0;
  LogisticFit fit;
};

// Least-squares logistic calibration (damped Gauss-Newton), then Pearson
// correlation between q(pred) and label. Falls back to raw Pearson with
// fit.converged = false if the fit does not converge.
PlccResult plcc_logistic(std::span<const double> pred,
                         std::span<const double> label);

struct Fold {
  std::vector<std::size_t> train, val, test;  // record indices
};

// Reference-stratified k-fold splits: all distorted versions of a reference
// travel together, references identical by content hash are merged, and SDR /
// HDR references are stratified per split. Test chunks rotate across folds so
// their union covers every reference exactly once.
std::vector<Fold> split_folds(const DatasetManifest& manifest, int k,
                              std::array<double, 3> ratios, Rng& rng);

enum class SubsetTag { Full, SDR, HDR };
std::string to_string(SubsetTag t);

struct EvalReport {
  SubsetTag subset = SubsetTag::Full;
  std::optional<int> fold;
  int n = 0;
  double srocc = 0.0;
  double plcc = 0.0;
  bool fit_converged = true;
};

struct EvalConfig {
  NormScheme scheme = NormScheme::Pmax;
  DisplayModel display = DisplayModel::sdr();
  int patches = 1024;
  int patch_size = 64;
  std::uint64_t seed = 0;
};

// Scores every record with the learned metric and reports correlations per
// subset (Full plus each domain with >= 3 labeled records).
std::vector<EvalReport> evaluate(const QualityNetParams& params,
                                 const DatasetManifest& manifest,
                                 const EvalConfig& cfg);

// Per-record learned-metric predictions, in manifest order.
std::vector<double> predict_records(const QualityNetParams& params,
                                    const DatasetManifest& manifest,
                                    const EvalConfig& cfg);

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalReport>& reports);

}  // namespace puiq
