#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vicon/errors.hpp"
#include "vicon/trainer.hpp"

namespace vicon {
namespace {

using nlohmann::json;

enum class Kind { Size, Real, Bool, Seed, Strategy, Init, Holdout };

struct Field {
  const char* key;
  Kind kind;
  void* (*member)(TrainConfig&);
};

#define VICON_FIELD(name, kind) \
  Field { #name, kind, [](TrainConfig& c) -> void* { return &c.name; } }

const Field kFields[] = {
    VICON_FIELD(width, Kind::Size),
    VICON_FIELD(hidden_layers, Kind::Size),
    VICON_FIELD(omega0, Kind::Real),
    VICON_FIELD(gegenbauer, Kind::Bool),
    VICON_FIELD(gegenbauer_orders, Kind::Size),
    VICON_FIELD(gegenbauer_alpha, Kind::Real),
    VICON_FIELD(m, Kind::Size),
    VICON_FIELD(lambda_auto, Kind::Bool),
    VICON_FIELD(lambda_s, Kind::Real),
    VICON_FIELD(lambda_c, Kind::Real),
    VICON_FIELD(novel_strategy, Kind::Strategy),
    VICON_FIELD(use_source_occlusion, Kind::Bool),
    VICON_FIELD(adam_lr, Kind::Real),
    VICON_FIELD(beta1, Kind::Real),
    VICON_FIELD(beta2, Kind::Real),
    VICON_FIELD(epsilon, Kind::Real),
    VICON_FIELD(sgd_lr, Kind::Real),
    VICON_FIELD(gamma, Kind::Real),
    VICON_FIELD(decay_every, Kind::Size),
    VICON_FIELD(batch_size, Kind::Size),
    VICON_FIELD(total_steps, Kind::Size),
    VICON_FIELD(seed, Kind::Seed),
    VICON_FIELD(a, Kind::Real),
    VICON_FIELD(refine_disparity, Kind::Bool),
    VICON_FIELD(refine_every, Kind::Size),
    VICON_FIELD(refine_warmup, Kind::Size),
    VICON_FIELD(disparity_init, Kind::Init),
    VICON_FIELD(stereo_window, Kind::Size),
    VICON_FIELD(stereo_d_max, Kind::Real),
    VICON_FIELD(stereo_lr_threshold, Kind::Real),
    VICON_FIELD(holdout, Kind::Holdout),
    VICON_FIELD(eval_every, Kind::Size),
    VICON_FIELD(checkpoint_every, Kind::Size),
};

#undef VICON_FIELD

const char* strategy_name(NovelStrategy s) { return s == NovelStrategy::Midpoint ? "midpoint" : "random"; }

const char* init_name(DisparityInit d) {
  switch (d) {
    case DisparityInit::Auto: return "auto";
    case DisparityInit::Layers: return "layers";
    case DisparityInit::BlockMatch: return "block_match";
  }
  return "auto";
}

[[noreturn]] void type_error(const char* key, const char* expected) {
  throw ConfigError(std::string("config: '") + key + "' must be " + expected);
}

void read_field(const Field& f, const json& v, TrainConfig& cfg) {
  void* p = f.member(cfg);
  switch (f.kind) {
    case Kind::Size:
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        type_error(f.key, "a non-negative integer");
      }
      *static_cast<std::size_t*>(p) = v.get<std::size_t>();
      break;
    case Kind::Seed:
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        type_error(f.key, "a non-negative integer");
      }
      *static_cast<std::uint64_t*>(p) = v.get<std::uint64_t>();
      break;
    case Kind::Real:
      if (!v.is_number()) type_error(f.key, "a number");
      *static_cast<double*>(p) = v.get<double>();
      break;
    case Kind::Bool:
      if (!v.is_boolean()) type_error(f.key, "a boolean");
      *static_cast<bool*>(p) = v.get<bool>();
      break;
    case Kind::Strategy: {
      if (!v.is_string()) type_error(f.key, "\"midpoint\" or \"random\"");
      const auto s = v.get<std::string>();
      if (s == "midpoint") {
        cfg.novel_strategy = NovelStrategy::Midpoint;
      } else if (s == "random") {
        cfg.novel_strategy = NovelStrategy::Random;
      } else {
        type_error(f.key, "\"midpoint\" or \"random\"");
      }
      break;
    }
    case Kind::Init: {
      if (!v.is_string()) type_error(f.key, "\"auto\", \"layers\" or \"block_match\"");
      const auto s = v.get<std::string>();
      if (s == "auto") {
        cfg.disparity_init = DisparityInit::Auto;
      } else if (s == "layers") {
        cfg.disparity_init = DisparityInit::Layers;
      } else if (s == "block_match") {
        cfg.disparity_init = DisparityInit::BlockMatch;
      } else {
        type_error(f.key, "\"auto\", \"layers\" or \"block_match\"");
      }
      break;
    }
    case Kind::Holdout: {
      if (!v.is_array()) type_error(f.key, "a list of [iu, iv] pairs");
      cfg.holdout.clear();
      for (const auto& e : v) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
          type_error(f.key, "a list of [iu, iv] pairs");
        }
        cfg.holdout.push_back({e[0].get<int>(), e[1].get<int>()});
      }
      break;
    }
  }
}

json write_field(const Field& f, const TrainConfig& cfg) {
  auto& c = const_cast<TrainConfig&>(cfg);
  void* p = f.member(c);
  switch (f.kind) {
    case Kind::Size: return *static_cast<std::size_t*>(p);
    case Kind::Seed: return *static_cast<std::uint64_t*>(p);
    case Kind::Real: return *static_cast<double*>(p);
    case Kind::Bool: return *static_cast<bool*>(p);
    case Kind::Strategy: return strategy_name(cfg.novel_strategy);
    case Kind::Init: return init_name(cfg.disparity_init);
    case Kind::Holdout: {
      json arr = json::array();
      for (const auto& h : cfg.holdout) arr.push_back({h.iu, h.iv});
      return arr;
    }
  }
  return nullptr;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : kFields) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

TrainConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const Field* f = find_field(key);
    if (f == nullptr) throw ConfigError("config: unknown key '" + key + "'");
    read_field(*f, value, cfg);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

void TrainConfig::validate() const {
  if (width == 0 || hidden_layers == 0) throw ConfigError("config: width and hidden_layers must be >= 1");
  if (!(omega0 > 0.0)) throw ConfigError("config: omega0 must be positive");
  if (gegenbauer && (gegenbauer_orders < 1 || !(gegenbauer_alpha > -0.5))) {
    throw ConfigError("config: gegenbauer needs orders >= 1 and alpha > -0.5");
  }
  if (!lambda_auto) {
    if (lambda_s < 0.0 || lambda_c < 0.0 || std::abs(lambda_s + lambda_c - 1.0) > 1e-12) {
      throw ConfigError("config: lambda_s + lambda_c must equal 1 with both >= 0");
    }
  }
  if (!(adam_lr > 0.0) || !(sgd_lr > 0.0)) throw ConfigError("config: learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("config: Adam constants out of range");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("config: gamma must be in (0, 1]");
  if (decay_every == 0) throw ConfigError("config: decay_every must be >= 1");
  if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  if (refine_every == 0) throw ConfigError("config: refine_every must be >= 1");
  if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("config: a must be >= 0 (0 keeps the manifest value)");
  stereo().validate();
}

std::vector<std::size_t> TrainConfig::architecture() const {
  std::vector<std::size_t> arch{gegenbauer ? 4 * gegenbauer_orders : 4};
  for (std::size_t i = 0; i < hidden_layers; ++i) arch.push_back(width);
  arch.push_back(3);
  return arch;
}

StereoConfig TrainConfig::stereo() const { return {stereo_window, stereo_d_max, stereo_lr_threshold, true}; }

std::string config_to_json(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& f : kFields) j[f.key] = write_field(f, cfg);
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_json(j);
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str());
}

TrainConfig apply_overrides(const TrainConfig& cfg, const std::vector<std::string>& overrides) {
  json j = json::parse(config_to_json(cfg));
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    if (find_field(key) == nullptr) throw ConfigError("config: unknown key '" + key + "'");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[key] = value;
  }
  return from_json(j);
}

}  // namespace vicon
