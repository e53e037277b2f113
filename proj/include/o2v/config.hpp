// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace o2v {

enum class OptimizerKind { kSgd, kAdam };

/// Every tunable of the mapping engine. Read from `key=value` text; unknown keys are rejected.
struct Config {
  // voxel field
  double voxel_edge = 0.16;
  int geo_dim = 16;
  int color_dim = 16;
  int q_max = 8;

  // decoders
  int pe_bands = 4;
  int hidden_width = 32;
  int hidden_layers = 3;

  // ray sampling and rendering
  int n_strat = 32;
  int n_surf = 12;
  double near = 0.1;
  double far = 6.0;
  double surface_band = 0.12;  ///< training surface samples cover gt depth +/- this
  double window_edges = 4.0;   ///< language window half width, in voxel edges
  int render_n_strat = 48;
  int render_n_surf = 48;
  double render_band = 0.4;    ///< fine render samples cover the coarse depth +/- this

  // optimization
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lambda_c = 0.2;
  double lr_feat = 1e-1;
  double lr_mlp = 1e-3;
  int m_pixels = 1024;
  int steps_per_frame = 200;
  double current_frame_share = 0.5;  ///< fraction of each batch drawn from the newest frame

  // language fusion
  double tau_split = 0.85;
  double tau_same = 0.95;
  bool voting = true;
  bool split = true;

  // retrieval map
  double alpha = 2.0;
  double eps_dist = 0.05;

  // relevance
  double tau_rel = 0.5;

  double max_range = 10.0;
  std::uint64_t seed = 0;

  /// Applies `key=value` lines ('#' comments and blank lines ignored).
  void apply_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  [[nodiscard]] std::map<std::string, std::string> to_map() const;
  [[nodiscard]] std::string to_text() const;
  void validate() const;
};

Config load_config(const std::string& path);

}  // namespace o2v
