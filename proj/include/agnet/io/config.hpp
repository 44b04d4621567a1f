#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/training/trainer.hpp"

namespace agnet::io {

/// A run: the experiment plus where its inputs and outputs live.
struct RunConfig {
  ExperimentConfig experiment;
  std::string dataset;
  std::string checkpoint = "agnet.ckpt";
  std::string log = "train_log.csv";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& text) {
  N v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid number '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean '" + text + "'");
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class N, class Access>
Field number_field(Access access) {
  return {[access](RunConfig& c, const std::string& v) { access(c) = parse_number<N>(v); },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>) {
              return format_double(access(const_cast<RunConfig&>(c)));
            } else {
              return std::to_string(access(const_cast<RunConfig&>(c)));
            }
          }};
}

template <class Access>
Field bool_field(Access access) {
  return {[access](RunConfig& c, const std::string& v) { access(c) = parse_bool(v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class Access>
Field string_field(Access access) {
  return {[access](RunConfig& c, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

template <class E, class Access>
Field enum_field(Access access, std::vector<E> values) {
  return {[access, values](RunConfig& c, const std::string& v) {
            for (E e : values) {
              if (v == to_string(e)) {
                access(c) = e;
                return;
              }
            }
            throw ConfigError("unknown value '" + v + "'");
          },
          [access](const RunConfig& c) { return std::string(to_string(access(const_cast<RunConfig&>(c)))); }};
}

inline Field size_list_field() {
  return {[](RunConfig& c, const std::string& v) {
            std::vector<std::size_t> out;
            std::stringstream ss(v);
            for (std::string part; std::getline(ss, part, ',');) {
              const std::string t = trim(part);
              if (!t.empty()) out.push_back(parse_number<std::size_t>(t));
            }
            c.experiment.model.stage_channels = out;
          },
          [](const RunConfig& c) {
            std::string out;
            for (std::size_t v : c.experiment.model.stage_channels) out += (out.empty() ? "" : ",") + std::to_string(v);
            return out;
          }};
}

#define AGNET_FIELD(expr) [](RunConfig & c) -> auto& { return expr; }

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["train.epochs"] = number_field<int>(AGNET_FIELD(c.experiment.train.epochs));
    f["train.batch_size"] = number_field<int>(AGNET_FIELD(c.experiment.train.batch_size));
    f["train.lr"] = number_field<double>(AGNET_FIELD(c.experiment.train.lr));
    f["train.momentum"] = number_field<double>(AGNET_FIELD(c.experiment.train.momentum));
    f["train.decay_factor"] = number_field<double>(AGNET_FIELD(c.experiment.train.decay_factor));
    f["train.decay_every"] = number_field<int>(AGNET_FIELD(c.experiment.train.decay_every));
    f["train.translation"] = number_field<double>(AGNET_FIELD(c.experiment.train.augmentation.translation));
    f["train.rotation_degrees"] = number_field<double>(AGNET_FIELD(c.experiment.train.augmentation.rotation_degrees));
    f["train.scale_min"] = number_field<double>(AGNET_FIELD(c.experiment.train.augmentation.scale_min));
    f["train.scale_max"] = number_field<double>(AGNET_FIELD(c.experiment.train.augmentation.scale_max));
    f["train.augment"] = bool_field(AGNET_FIELD(c.experiment.train.augment));
    f["train.seed"] = number_field<std::uint64_t>(AGNET_FIELD(c.experiment.train.seed));
    f["train.kappa"] = number_field<int>(AGNET_FIELD(c.experiment.train.kappa));
    f["train.image_size"] = number_field<int>(AGNET_FIELD(c.experiment.train.image_size));
    f["train.min_region_side"] = number_field<double>(AGNET_FIELD(c.experiment.train.min_region_side));
    f["train.region_mode"] = enum_field(AGNET_FIELD(c.experiment.train.region_mode),
                                        std::vector{RegionMode::keypoints, RegionMode::feature_map, RegionMode::grid,
                                                    RegionMode::whole_image});
    f["train.region_selection"] =
        enum_field(AGNET_FIELD(c.experiment.train.region_selection),
                   std::vector{RegionSelection::both, RegionSelection::primary, RegionSelection::secondary});
    f["train.workers"] = number_field<std::size_t>(AGNET_FIELD(c.experiment.train.workers));

    f["detector.octaves"] = number_field<int>(AGNET_FIELD(c.experiment.detector.octaves));
    f["detector.intervals_per_octave"] = number_field<int>(AGNET_FIELD(c.experiment.detector.intervals_per_octave));
    f["detector.base_sigma"] = number_field<double>(AGNET_FIELD(c.experiment.detector.base_sigma));
    f["detector.contrast_threshold"] = number_field<double>(AGNET_FIELD(c.experiment.detector.contrast_threshold));
    f["detector.edge_ratio_threshold"] = number_field<double>(AGNET_FIELD(c.experiment.detector.edge_ratio_threshold));
    f["detector.max_keypoints"] = number_field<int>(AGNET_FIELD(c.experiment.detector.max_keypoints));

    f["gmm.covariance_regularization"] = number_field<double>(AGNET_FIELD(c.experiment.gmm.covariance_regularization));
    f["gmm.max_iterations"] = number_field<int>(AGNET_FIELD(c.experiment.gmm.max_iterations));
    f["gmm.convergence_threshold"] = number_field<double>(AGNET_FIELD(c.experiment.gmm.convergence_threshold));
    f["gmm.seed"] = number_field<std::uint64_t>(AGNET_FIELD(c.experiment.gmm.seed));

    f["model.stage_channels"] = size_list_field();
    f["model.channels"] = number_field<std::size_t>(AGNET_FIELD(c.experiment.model.channels));
    f["model.inter_dim"] = number_field<std::size_t>(AGNET_FIELD(c.experiment.model.inter_dim));
    f["model.pooled_size"] = number_field<std::size_t>(AGNET_FIELD(c.experiment.model.pooled_size));
    f["model.self_attention"] = bool_field(AGNET_FIELD(c.experiment.model.self_attention));
    f["model.se_residual"] = bool_field(AGNET_FIELD(c.experiment.model.se_residual));
    f["model.inter_attention"] = bool_field(AGNET_FIELD(c.experiment.model.inter_attention));
    f["model.pooling"] = enum_field(AGNET_FIELD(c.experiment.model.pooling),
                                    std::vector{PoolingMode::fused, PoolingMode::gmp_only, PoolingMode::gap_only});

    f["data.dataset"] = string_field(AGNET_FIELD(c.dataset));
    f["data.checkpoint"] = string_field(AGNET_FIELD(c.checkpoint));
    f["data.log"] = string_field(AGNET_FIELD(c.log));
    return f;
  }();
  return table;
}

#undef AGNET_FIELD

}  // namespace detail

/// Sets one key; the message names the key on failure.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "gmm.k") throw ConfigError("gmm.k is derived from train.kappa; set train.kappa instead");
  const auto& table = detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

/// Flat `key = value` lines; `#` starts a comment.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "<config>") {
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where() + "expected 'key = value'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
  }
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  RunConfig cfg;
  apply_config_text(cfg, text, source);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Every key with its current value, sorted by key.
inline std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : detail::fields()) out[key] = field.get(cfg);
  return out;
}

inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  // Empty values mean "unset" and cannot be written as `key = value`.
  for (const auto& [k, v] : config_entries(cfg))
    if (!v.empty()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace agnet::io
