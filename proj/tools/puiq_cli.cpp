#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "puiq/experiment.hpp"
#include "puiq/metrics.hpp"
#include "puiq/pipeline.hpp"

namespace {

using namespace puiq;

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

struct RunLog {
  std::string path;
  std::string start = now_iso();

  void append(const std::string& subcommand, std::uint64_t seed,
              const std::string& flags, const std::string& artifacts) const {
    if (path.empty()) return;
    const bool fresh = !std::ifstream(path).good();
    std::ofstream f(path, std::ios::app);
    if (!f) return;
    if (fresh) f << "start,end,subcommand,seed,flags,artifacts\n";
    f << start << "," << now_iso() << "," << subcommand << "," << seed << ","
      << flags << "," << artifacts << "\n";
  }
};

Grid load_luminance(const std::string& path, const DisplayModel& display) {
  const ImageFile img = read_image(path);
  if (img.tag == ColorspaceTag::DisplayEncodedSdr)
    return display_response(img.pixels, display);
  return img.pixels;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"puiq - HDR image-quality pipeline: display simulation, "
               "perceptually uniform encoding, classical and learned metrics, "
               "SDR-to-HDR domain-adapted training"};
  app.require_subcommand(1);
  app.fallthrough();  // allow global options like --run-log after a subcommand

  std::string run_log_path;
  app.add_option("--run-log", run_log_path,
                 "append-only CSV run log (empty: disabled)");

  // --- make-dataset
  auto* mk = app.add_subcommand("make-dataset", "generate a synthetic IQA dataset");
  SynthConfig sc;
  std::string mk_out, mk_domain = "sdr", mk_dtypes = "gauss-noise,gauss-blur,quantize,contrast";
  std::uint64_t mk_seed = 0;
  bool mk_unlabeled = false;
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->add_option("--refs", sc.refs, "number of reference images")
      ->default_val(24);
  mk->add_option("--dtypes", mk_dtypes, "comma-separated distortion types")
      ->default_val(mk_dtypes);
  mk->add_option("--levels", sc.levels, "distortion levels per type")
      ->default_val(5);
  mk->add_option("--domain", mk_domain, "sdr | hdr")->default_val("sdr");
  mk->add_option("--height", sc.height, "image height")->default_val(128);
  mk->add_option("--width", sc.width, "image width")->default_val(128);
  mk->add_option("--seed", mk_seed, "generator seed")->default_val(0);
  mk->add_flag("--unlabeled", mk_unlabeled, "omit quality labels");

  // --- encode
  auto* enc = app.add_subcommand("encode", "encode an image to PU/PQ units");
  std::string enc_in, enc_out, enc_display = "sdr", enc_encoder = "pu21",
              enc_scheme = "none";
  enc->add_option("--in", enc_in, "input image (pfm|png)")->required();
  enc->add_option("--display", enc_display, "display preset name or JSON file")
      ->default_val("sdr");
  enc->add_option("--encoder", enc_encoder, "pu21 | pq")->default_val("pu21");
  enc->add_option("--scheme", enc_scheme, "pmax | 255 | none")
      ->default_val("none");
  enc->add_option("--out", enc_out, "output PFM path")->required();

  // --- score
  auto* scq = app.add_subcommand("score", "score a reference/distorted pair");
  std::string s_ref, s_dist, s_display = "sdr", s_metric = "pu-psnr", s_csv;
  double s_peak = 1.0;
  scq->add_option("--ref", s_ref, "reference image")->required();
  scq->add_option("--dist", s_dist, "distorted image")->required();
  scq->add_option("--display", s_display, "display preset name or JSON file")
      ->default_val("sdr");
  scq->add_option("--metric", s_metric, "pu-psnr | pu-ssim | psnr | ssim")
      ->default_val("pu-psnr");
  scq->add_option("--peak", s_peak, "peak for plain psnr/ssim")
      ->default_val(1.0);
  scq->add_option("--csv", s_csv, "append result to this CSV file");

  // --- train
  auto* tr = app.add_subcommand("train", "train the patch-quality model");
  std::string t_config, t_source, t_target, t_out, t_history;
  std::int64_t t_seed = -1;
  tr->add_option("--config", t_config, "train config JSON")->required();
  tr->add_option("--source", t_source, "source (SDR) manifest CSV")->required();
  tr->add_option("--target", t_target, "target manifest CSV");
  tr->add_option("--out", t_out, "output checkpoint path")->required();
  tr->add_option("--history", t_history, "per-epoch history CSV");
  tr->add_option("--seed", t_seed, "override config seed")->default_val(-1);

  // --- eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  std::string e_ckpt, e_manifest, e_display = "sdr", e_scheme = "pmax",
              e_report;
  int e_patches = 1024;
  std::uint64_t e_seed = 0;
  ev->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  ev->add_option("--manifest", e_manifest, "dataset manifest CSV")->required();
  ev->add_option("--display", e_display, "display preset name or JSON file")
      ->default_val("sdr");
  ev->add_option("--scheme", e_scheme, "pmax | 255")->default_val("pmax");
  ev->add_option("--patches", e_patches, "patches per record")
      ->default_val(1024);
  ev->add_option("--seed", e_seed, "patch sampling seed")->default_val(0);
  ev->add_option("--report", e_report, "report CSV path");

  // --- experiment
  auto* ex = app.add_subcommand(
      "experiment", "run the CORAL ablation on synthetic data");
  ExperimentConfig xc;
  std::string x_out;
  ex->add_option("--out", x_out, "output directory")->required();
  ex->add_option("--seed", xc.seed, "master seed")->default_val(7);
  ex->add_option("--seeds", xc.num_seeds, "number of seeds")->default_val(3);
  ex->add_option("--epochs", xc.epochs, "epochs per run")->default_val(30);
  ex->add_option("--refs", xc.refs, "training reference count")->default_val(8);
  ex->add_option("--test-refs", xc.test_refs, "held-out reference count")
      ->default_val(6);
  ex->add_option("--eval-patches", xc.eval_patches, "patches per eval record")
      ->default_val(256);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  RunLog log{run_log_path};
  try {
    if (*mk) {
      sc.domain = domain_from_string(mk_domain);
      sc.seed = mk_seed;
      sc.labeled = !mk_unlabeled;
      sc.out_dir = mk_out;
      sc.dtypes.clear();
      std::stringstream ss(mk_dtypes);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) sc.dtypes.push_back(dist_from_string(tok));
      const DatasetManifest m = build_manifest(sc);
      std::cout << "wrote " << m.records.size() << " records to "
                << (sc.out_dir / "manifest.csv").string() << "\n";
      log.append("make-dataset", mk_seed, mk_domain, mk_out);
    } else if (*enc) {
      const DisplayModel display = DisplayModel::load(enc_display);
      const Grid lum = load_luminance(enc_in, display);
      EncodedImage e = enc_encoder == "pq" ? pq_encode(lum, /*scale255=*/true)
                                           : pu21_encode(lum);
      const NormScheme scheme = scheme_from_string(enc_scheme);
      if (scheme != NormScheme::None) e = normalize(e, scheme);
      write_pfm(enc_out, e.values);
      std::cout << "wrote " << enc_out << "\n";
      log.append("encode", 0, enc_encoder + "/" + enc_scheme, enc_out);
    } else if (*scq) {
      const DisplayModel display = DisplayModel::load(s_display);
      const MetricKind kind = metric_from_string(s_metric);
      MetricResult r;
      if (kind == MetricKind::PU_PSNR || kind == MetricKind::PU_SSIM) {
        const Grid ref = load_luminance(s_ref, display);
        const Grid dist = load_luminance(s_dist, display);
        r = pu_metric(ref, dist,
                      kind == MetricKind::PU_PSNR ? MetricKind::PSNR
                                                  : MetricKind::SSIM);
      } else {
        const Grid ref = read_image(s_ref).pixels;
        const Grid dist = read_image(s_dist).pixels;
        r = kind == MetricKind::PSNR ? psnr(ref, dist, s_peak)
                                     : ssim(ref, dist, s_peak);
      }
      std::printf("%s %.6f\n", to_string(r.metric).c_str(), r.score);
      if (!s_csv.empty()) {
        const bool fresh = !std::ifstream(s_csv).good();
        std::ofstream f(s_csv, std::ios::app);
        if (fresh) f << "ref,dist,metric,score,peak\n";
        f << s_ref << "," << s_dist << "," << to_string(r.metric) << ","
          << r.score << "," << r.peak << "\n";
      }
      log.append("score", 0, s_metric, s_csv);
    } else if (*tr) {
      TrainConfig cfg = TrainConfig::load(t_config);
      if (t_seed >= 0) cfg.seed = static_cast<std::uint64_t>(t_seed);
      const DatasetManifest source = read_manifest(t_source);
      DatasetManifest target;
      const bool has_target = !t_target.empty();
      if (has_target) target = read_manifest(t_target);
      Rng init_rng = Rng::substream(cfg.seed, "init");
      QualityNetParams init = init_params(cfg.net, init_rng);
      const TrainResult result =
          train(cfg, source, has_target ? &target : nullptr, std::move(init));
      save_checkpoint(t_out, result.params);
      if (!t_history.empty()) result.history.write_csv(t_history);
      const auto& last = result.history.epochs.back();
      std::printf("trained %d epochs: l_sdr=%.4f l_hdr=%.4f l_coral=%.6f "
                  "lambda=%.4g\n",
                  cfg.epochs, last.l_sdr, last.l_hdr, last.l_coral,
                  result.lambda_final);
      log.append("train", cfg.seed, to_string(cfg.da_mode), t_out);
    } else if (*ev) {
      const QualityNetParams params = load_checkpoint(e_ckpt);
      const DatasetManifest manifest = read_manifest(e_manifest);
      EvalConfig cfg;
      cfg.scheme = scheme_from_string(e_scheme);
      cfg.display = DisplayModel::load(e_display);
      cfg.patches = e_patches;
      cfg.patch_size = params.patch_size();
      cfg.seed = e_seed;
      const auto reports = evaluate(params, manifest, cfg);
      for (const auto& r : reports)
        std::printf("%-4s n=%-4d srocc=%.4f plcc=%.4f%s\n",
                    to_string(r.subset).c_str(), r.n, r.srocc, r.plcc,
                    r.fit_converged ? "" : " (fit fallback)");
      if (!e_report.empty()) write_eval_csv(e_report, reports);
      log.append("eval", e_seed, e_scheme, e_report);
    } else if (*ex) {
      xc.out_dir = x_out;
      const ExperimentResult r = run_experiment(xc);
      write_experiment_csv(xc.out_dir / "comparison.csv", r);
      std::printf("arm      median_cov  median_hdr_srocc\n");
      std::printf("lambda0  %10.6f  %16.4f\n", r.median_cov_baseline,
                  r.median_srocc_baseline);
      std::printf("coral    %10.6f  %16.4f\n", r.median_cov_coral,
                  r.median_srocc_coral);
      log.append("experiment", xc.seed, "seeds=" + std::to_string(xc.num_seeds),
                 (xc.out_dir / "comparison.csv").string());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
