#include "fiberseg/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fiberseg {

using nlohmann::json;

GridSpec PipelineConfig::grid() const {
  if (dims) return GridSpec((*dims)[0], (*dims)[1], (*dims)[2], voxel_size_um);
  const auto n = static_cast<std::size_t>(std::ceil(model.box_edge / voxel_size_um - 1e-9));
  return GridSpec(n, n, n, voxel_size_um);
}

ScaleSet PipelineConfig::effective_scales() const {
  return scales ? *scales : default_scales(model.radius, voxel_size_um);
}

double PipelineConfig::effective_annotation_threshold() const {
  return annotation_threshold ? *annotation_threshold
                              : 0.5 * (degrade.levels.fiber_value + degrade.levels.matrix_value);
}

void PipelineConfig::validate() const {
  model.validate();
  (void)grid();
  if (supersample < 1) throw ParameterError("rasterize.supersample must be >= 1");
  degrade.validate();
  if (fbp_angles < 1) throw ParameterError("fbp.n_angles must be >= 1");
  vesselness.validate();
  effective_scales().validate();
  if (binarize.kind == BinarizeMethod::Kind::fixed && !std::isfinite(binarize.threshold))
    throw ParameterError("binarize.threshold must be finite");
  if (!(orientation_sigma > 0.0) || !(orientation_rho >= 0.0))
    throw ParameterError("orientation.sigma must be > 0 and orientation.rho >= 0");
}

namespace {

void reject_unknown(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ParameterError("config: \"" + name + "\" must be an object");
  for (const auto& [key, value] : section.items())
    if (!allowed.count(key)) throw ParameterError("config: unknown key \"" + name + "." + key + "\"");
}

template <class T>
void read(const json& section, const char* key, T& dst) {
  if (section.contains(key)) dst = section.at(key).get<T>();
}

double read_snr(const json& v) {
  if (v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  reject_unknown(j, "",
                 {"model", "grid", "rasterize", "degrade", "fbp", "vesselness", "binarize", "annotation", "metrics",
                  "orientation"});
  try {
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, "model",
                     {"box_edge_um", "radius_um", "mean_length_um", "length_stddev_um", "target_fraction",
                      "max_attempts", "seed"});
      read(m, "box_edge_um", c.model.box_edge);
      read(m, "radius_um", c.model.radius);
      read(m, "mean_length_um", c.model.mean_length);
      read(m, "length_stddev_um", c.model.length_stddev);
      read(m, "target_fraction", c.model.target_fraction);
      read(m, "max_attempts", c.model.max_attempts);
      read(m, "seed", c.model.seed);
    }
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      reject_unknown(g, "grid", {"dims", "voxel_size_um"});
      if (g.contains("dims") && !g["dims"].is_null()) c.dims = g["dims"].get<std::array<std::size_t, 3>>();
      read(g, "voxel_size_um", c.voxel_size_um);
    }
    if (j.contains("rasterize")) {
      reject_unknown(j["rasterize"], "rasterize", {"supersample"});
      read(j["rasterize"], "supersample", c.supersample);
    }
    if (j.contains("degrade")) {
      const auto& d = j["degrade"];
      reject_unknown(d, "degrade", {"psf_sigma_um", "snr", "noise_seed", "fiber_value", "matrix_value"});
      read(d, "psf_sigma_um", c.degrade.psf_sigma_um);
      if (d.contains("snr")) c.degrade.snr = read_snr(d["snr"]);
      read(d, "noise_seed", c.degrade.noise_seed);
      read(d, "fiber_value", c.degrade.levels.fiber_value);
      read(d, "matrix_value", c.degrade.levels.matrix_value);
    }
    if (j.contains("fbp")) {
      reject_unknown(j["fbp"], "fbp", {"n_angles"});
      read(j["fbp"], "n_angles", c.fbp_angles);
    }
    if (j.contains("vesselness")) {
      const auto& v = j["vesselness"];
      reject_unknown(v, "vesselness", {"alpha", "beta", "c", "c_auto", "scales", "polarity"});
      read(v, "alpha", c.vesselness.alpha);
      read(v, "beta", c.vesselness.beta);
      read(v, "c", c.vesselness.c);
      read(v, "c_auto", c.vesselness.c_auto);
      if (v.contains("scales") && !v["scales"].is_null()) c.scales = ScaleSet{v["scales"].get<std::vector<double>>()};
      if (v.contains("polarity")) {
        const auto p = v["polarity"].get<std::string>();
        if (p == "bright")
          c.polarity = Polarity::bright_on_dark;
        else if (p == "dark")
          c.polarity = Polarity::dark_on_bright;
        else
          throw ParameterError("config: vesselness.polarity must be \"bright\" or \"dark\"");
      }
    }
    if (j.contains("binarize")) {
      const auto& b = j["binarize"];
      reject_unknown(b, "binarize", {"method", "threshold"});
      std::string method = "otsu";
      read(b, "method", method);
      double t = c.binarize.threshold;
      read(b, "threshold", t);
      if (method == "otsu")
        c.binarize = BinarizeMethod::otsu();
      else if (method == "fixed")
        c.binarize = BinarizeMethod::fixed(t);
      else
        throw ParameterError("config: binarize.method must be \"otsu\" or \"fixed\"");
    }
    if (j.contains("annotation")) {
      reject_unknown(j["annotation"], "annotation", {"threshold"});
      if (j["annotation"].contains("threshold") && !j["annotation"]["threshold"].is_null())
        c.annotation_threshold = j["annotation"]["threshold"].get<double>();
    }
    if (j.contains("metrics")) {
      reject_unknown(j["metrics"], "metrics", {"ignore_background"});
      read(j["metrics"], "ignore_background", c.ignore_background);
    }
    if (j.contains("orientation")) {
      reject_unknown(j["orientation"], "orientation", {"sigma", "rho"});
      read(j["orientation"], "sigma", c.orientation_sigma);
      read(j["orientation"], "rho", c.orientation_rho);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["model"] = {{"box_edge_um", c.model.box_edge},       {"radius_um", c.model.radius},
                {"mean_length_um", c.model.mean_length},  {"length_stddev_um", c.model.length_stddev},
                {"target_fraction", c.model.target_fraction}, {"max_attempts", c.model.max_attempts},
                {"seed", c.model.seed}};
  j["grid"] = {{"dims", c.dims ? json(*c.dims) : json(nullptr)}, {"voxel_size_um", c.voxel_size_um}};
  j["rasterize"] = {{"supersample", c.supersample}};
  j["degrade"] = {{"psf_sigma_um", c.degrade.psf_sigma_um},
                  {"snr", std::isinf(c.degrade.snr) ? json("inf") : json(c.degrade.snr)},
                  {"noise_seed", c.degrade.noise_seed},
                  {"fiber_value", c.degrade.levels.fiber_value},
                  {"matrix_value", c.degrade.levels.matrix_value}};
  j["fbp"] = {{"n_angles", c.fbp_angles}};
  j["vesselness"] = {{"alpha", c.vesselness.alpha},
                     {"beta", c.vesselness.beta},
                     {"c", c.vesselness.c},
                     {"c_auto", c.vesselness.c_auto},
                     {"scales", c.scales ? json(c.scales->sigmas) : json(nullptr)},
                     {"polarity", c.polarity == Polarity::bright_on_dark ? "bright" : "dark"}};
  j["binarize"] = {{"method", c.binarize.kind == BinarizeMethod::Kind::otsu ? "otsu" : "fixed"},
                   {"threshold", c.binarize.threshold}};
  j["annotation"] = {{"threshold", c.annotation_threshold ? json(*c.annotation_threshold) : json(nullptr)}};
  j["metrics"] = {{"ignore_background", c.ignore_background}};
  j["orientation"] = {{"sigma", c.orientation_sigma}, {"rho", c.orientation_rho}};
  return j.dump(2);
}

}  // namespace fiberseg
