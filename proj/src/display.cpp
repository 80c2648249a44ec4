#include "puiq/display.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace puiq {

void DisplayModel::validate() const {
  if (!(l_blk >= 0.0) || !(l_blk < l_max))
    throw ConfigError("display model requires 0 <= l_blk < l_max");
  if (!(reflectivity_k >= 0.0) || !(reflectivity_k < 1.0))
    throw ConfigError("display reflectivity k must be in [0,1)");
  if (!(ambient_lux >= 0.0))
    throw ConfigError("ambient illuminance must be >= 0");
  if (eotf.kind == EotfKind::Gamma && !(eotf.gamma > 0.0))
    throw ConfigError("gamma must be positive");
}

double DisplayModel::ambient_term() const {
  return reflectivity_k / M_PI * ambient_lux;
}

DisplayModel DisplayModel::sdr() {
  return DisplayModel{100.0, 0.5, 0.005, 0.0, Eotf{EotfKind::Gamma, 2.2}};
}

DisplayModel DisplayModel::hdr(double l_max) {
  return DisplayModel{l_max, 0.05, 0.005, 0.0, Eotf{EotfKind::Gamma, 2.2}};
}

DisplayModel DisplayModel::preset(std::string_view name) {
  if (name == "sdr") return sdr();
  if (name == "hdr") return hdr();
  throw ConfigError("unknown display preset: " + std::string(name));
}

DisplayModel DisplayModel::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("display config: ") + e.what());
  }
  DisplayModel m = sdr();
  if (j.contains("l_max")) m.l_max = j.at("l_max").get<double>();
  if (j.contains("l_blk")) m.l_blk = j.at("l_blk").get<double>();
  if (j.contains("k")) m.reflectivity_k = j.at("k").get<double>();
  if (j.contains("ambient_lux")) m.ambient_lux = j.at("ambient_lux").get<double>();
  if (j.contains("eotf")) m.eotf = eotf_from_string(j.at("eotf").get<std::string>());
  m.validate();
  return m;
}

DisplayModel DisplayModel::load(const std::string& preset_or_json_path) {
  if (preset_or_json_path == "sdr" || preset_or_json_path == "hdr")
    return preset(preset_or_json_path);
  std::ifstream f(preset_or_json_path);
  if (!f) throw ConfigError("display: no such preset or file: " + preset_or_json_path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

Eotf eotf_from_string(std::string_view s) {
  if (s == "srgb") return Eotf{EotfKind::Srgb, 2.2};
  if (s == "linear") return Eotf{EotfKind::Linear, 2.2};
  if (s.rfind("gamma:", 0) == 0) {
    const double g = std::stod(std::string(s.substr(6)));
    if (!(g > 0.0)) throw ConfigError("gamma must be positive");
    return Eotf{EotfKind::Gamma, g};
  }
  if (s == "gamma") return Eotf{EotfKind::Gamma, 2.2};
  throw ConfigError("unknown eotf: " + std::string(s));
}

std::string to_string(const Eotf& e) {
  switch (e.kind) {
    case EotfKind::Srgb:
      return "srgb";
    case EotfKind::Linear:
      return "linear";
    case EotfKind::Gamma: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "gamma:%g", e.gamma);
      return buf;
    }
  }
  return "gamma:2.2";
}

double eotf_apply(double v, const Eotf& e) {
  if (!(v >= 0.0 && v <= 1.0))
    throw DomainError("eotf input must be in [0,1], got " + std::to_string(v));
  switch (e.kind) {
    case EotfKind::Linear:
      return v;
    case EotfKind::Gamma:
      return std::pow(v, e.gamma);
    case EotfKind::Srgb:
      // IEC 61966-2-1 two-piece curve.
      return v <= 0.04045 ? v / 12.92
                          : std::pow((v + 0.055) / 1.055, 2.4);
  }
  return v;
}

double display_response_scalar(double v, const DisplayModel& model,
                               bool include_ambient) {
  double l = (model.l_max - model.l_blk) * eotf_apply(v, model.eotf) + model.l_blk;
  if (include_ambient) l += model.ambient_term();
  return l;
}

Grid display_response(const Grid& v_image, const DisplayModel& model,
                      bool include_ambient) {
  model.validate();
  const double amb = include_ambient ? model.ambient_term() : 0.0;
  Grid out(v_image.rows(), v_image.cols());
  for (Eigen::Index c = 0; c < v_image.cols(); ++c)
    for (Eigen::Index r = 0; r < v_image.rows(); ++r)
      out(r, c) = (model.l_max - model.l_blk) *
                      eotf_apply(v_image(r, c), model.eotf) +
                  model.l_blk + amb;
  return out;
}

double sample_lmax(Domain domain, Rng& rng, double floor) {
  const double mean = domain == Domain::SDR ? 100.0 : 5000.0;
  const double sigma = domain == Domain::SDR ? 10.0 : 500.0;
  return std::max(floor, rng.normal(mean, sigma));
}

}  // namespace puiq
