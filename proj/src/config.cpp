// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "o2v/camera.hpp"

namespace o2v {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw InputError("config: bad boolean '" + v + "'");
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw InputError("config: bad number '" + v + "'");
  return d;
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Field {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename T>
Field number(T Config::*m) {
  return {[m](Config& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) {
              c.*m = static_cast<T>(parse_double(v));
            } else {
              T parsed{};
              const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
              if (ec == std::errc::result_out_of_range) throw std::out_of_range(v);
              if (ec != std::errc{} || end != v.data() + v.size()) {
                throw InputError("config: expected integer, got '" + v + "'");
              }
              c.*m = parsed;
            }
          },
          [m](const Config& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*m);
            else return std::to_string(c.*m);
          }};
}

Field flag(bool Config::*m) {
  return {[m](Config& c, const std::string& v) { c.*m = parse_bool(v); },
          [m](const Config& c) { return std::string(c.*m ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"voxel_edge", number(&Config::voxel_edge)},
      {"geo_dim", number(&Config::geo_dim)},
      {"color_dim", number(&Config::color_dim)},
      {"q_max", number(&Config::q_max)},
      {"pe_bands", number(&Config::pe_bands)},
      {"hidden_width", number(&Config::hidden_width)},
      {"hidden_layers", number(&Config::hidden_layers)},
      {"n_strat", number(&Config::n_strat)},
      {"n_surf", number(&Config::n_surf)},
      {"near", number(&Config::near)},
      {"far", number(&Config::far)},
      {"surface_band", number(&Config::surface_band)},
      {"window_edges", number(&Config::window_edges)},
      {"render_n_strat", number(&Config::render_n_strat)},
      {"render_n_surf", number(&Config::render_n_surf)},
      {"render_band", number(&Config::render_band)},
      {"optimizer",
       {[](Config& c, const std::string& v) {
          if (v == "adam") c.optimizer = OptimizerKind::kAdam;
          else if (v == "sgd") c.optimizer = OptimizerKind::kSgd;
          else throw InputError("config: optimizer must be adam or sgd");
        },
        [](const Config& c) { return std::string(c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"); }}},
      {"lambda_c", number(&Config::lambda_c)},
      {"lr_feat", number(&Config::lr_feat)},
      {"lr_mlp", number(&Config::lr_mlp)},
      {"m_pixels", number(&Config::m_pixels)},
      {"steps_per_frame", number(&Config::steps_per_frame)},
      {"current_frame_share", number(&Config::current_frame_share)},
      {"tau_split", number(&Config::tau_split)},
      {"tau_same", number(&Config::tau_same)},
      {"voting", flag(&Config::voting)},
      {"split", flag(&Config::split)},
      {"alpha", number(&Config::alpha)},
      {"eps_dist", number(&Config::eps_dist)},
      {"tau_rel", number(&Config::tau_rel)},
      {"max_range", number(&Config::max_range)},
      {"seed", number(&Config::seed)},
  };
  return table;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw InputError("config: unknown key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const std::invalid_argument&) {
    throw InputError("config: bad value for '" + key + "': '" + value + "'");
  } catch (const std::out_of_range&) {
    throw InputError("config: value out of range for '" + key + "'");
  }
}

void Config::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate();
}

std::map<std::string, std::string> Config::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : fields()) out[k] = f.get(*this);
  return out;
}

std::string Config::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_map()) s += k + "=" + v + "\n";
  return s;
}

void Config::validate() const {
  if (!(voxel_edge > 0)) throw InputError("config: voxel_edge must be positive");
  if (geo_dim <= 0 || color_dim <= 0) throw InputError("config: feature dims must be positive");
  if (q_max <= 0) throw InputError("config: q_max must be positive");
  if (pe_bands < 0) throw InputError("config: pe_bands must be >= 0");
  if (hidden_width <= 0 || hidden_layers < 0) throw InputError("config: bad decoder shape");
  if (n_strat <= 0 || n_surf < 0 || render_n_strat <= 0 || render_n_surf < 0) {
    throw InputError("config: sample counts must be positive");
  }
  if (!(surface_band > 0) || !(render_band > 0) || !(window_edges > 0)) {
    throw InputError("config: sampling bands must be positive");
  }
  if (!(near > 0) || !(far > near)) throw InputError("config: need 0 < near < far");
  if (m_pixels <= 0 || steps_per_frame < 0) throw InputError("config: bad training schedule");
  if (current_frame_share < 0 || current_frame_share > 1) throw InputError("config: current_frame_share in [0,1]");
  if (!(eps_dist > 0)) throw InputError("config: eps_dist must be positive");
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  c.apply_text(ss.str());
  return c;
}

}  // namespace o2v
