#pragma once

#include <array>
#include <optional>
#include <string>

#include "fiberseg/ct_sim.hpp"
#include "fiberseg/fiber_model.hpp"
#include "fiberseg/vesselness.hpp"

namespace fiberseg {

/// Every pipeline knob in one JSON document. Missing keys keep the defaults
/// below; unknown keys are rejected.
struct PipelineConfig {
  ModelParams model;

  /// Voxel grid. Empty dims means ceil(box_edge / voxel_size) per axis.
  std::optional<std::array<std::size_t, 3>> dims;
  double voxel_size_um = 3.9;

  int supersample = 3;
  DegradeParams degrade{4.0, 20.0, 0, {}};
  std::size_t fbp_angles = 400;

  VesselnessParams vesselness;
  /// Empty means default_scales(radius, voxel_size).
  std::optional<ScaleSet> scales;
  Polarity polarity = Polarity::bright_on_dark;
  BinarizeMethod binarize = BinarizeMethod::otsu();

  /// Region-growing threshold; empty means midway between the attenuation levels.
  std::optional<double> annotation_threshold;

  bool ignore_background = true;

  double orientation_sigma = 1.0;
  double orientation_rho = 2.0;

  GridSpec grid() const;
  ScaleSet effective_scales() const;
  double effective_annotation_threshold() const;

  void validate() const;
};

PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& c);

}  // namespace fiberseg
