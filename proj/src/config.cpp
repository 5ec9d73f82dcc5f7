#include "rddm/config.hpp"

#include <fstream>
#include <set>

#include "rddm/errors.hpp"

namespace rddm {

namespace {

// Reads keys from one JSON object and rejects anything it did not consume.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        if (it->is_number_integer() && it->template get<std::int64_t>() < 0) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "/" + key + ": wrong type (got " + std::string(it->type_name()) + ")");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "/" + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + "/" + it.key() + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const DriftConfig& c) {
  return {{"temperatures", c.temperatures},
          {"lambda", c.lambda},
          {"norm_scaling", to_string(c.norm_scaling)},
          {"l1_reduction", to_string(c.l1_reduction)}};
}

Json to_json(const GeneratorConfig& c) {
  return {{"base_channels", c.base_channels},
          {"depth", c.depth},
          {"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"seed", c.seed}};
}

Json to_json(const NoiseModel& c) {
  return {{"gaussian_sigma", c.gaussian_sigma},
          {"streak_sigma", c.streak_sigma},
          {"ndct_sigma", c.ndct_sigma}};
}

Json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations}, {"lr", c.lr},
          {"decay_step", c.decay_step}, {"decay_factor", c.decay_factor},
          {"ema_decay", c.ema_decay},   {"clip_norm", c.clip_norm},
          {"batch", c.batch},           {"patch", c.patch},
          {"beta1", c.beta1},           {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},     {"weight_decay", c.weight_decay},
          {"log_every", c.log_every},   {"drift", to_json(c.drift)},
          {"generator", to_json(c.generator)}, {"seed", c.seed}};
}

Json to_json(const SimulateOptions& c) {
  return {{"train_count", c.train_count}, {"test_count", c.test_count}, {"flat_count", c.flat_count},
          {"size", c.size},               {"flat_size", c.flat_size},   {"flat_intensity", c.flat_intensity},
          {"noise", to_json(c.noise)},    {"seed", c.seed}};
}

Json to_json(const DenoiseOptions& c) {
  return {{"seed", c.seed},
          {"raw_weights", c.raw_weights},
          {"png_dir", c.png_dir},
          {"window_low_hu", c.window_low_hu},
          {"window_high_hu", c.window_high_hu},
          {"hu_at_zero", c.hu_at_zero},
          {"hu_at_one", c.hu_at_one}};
}

Json to_json(const EvalOptions& c) {
  return {{"data_range", c.data_range},
          {"roi_size", c.roi_size},
          {"rois_per_image", c.rois_per_image},
          {"flatness_factor", c.flatness_factor},
          {"pixel_spacing", c.pixel_spacing}};
}

Json to_json(const RunConfig& c) {
  Json train = to_json(c.train);
  if (c.variant) train["variant"] = preset(*c.variant).name;
  return {{"simulate", to_json(c.simulate)}, {"train", train}, {"denoise", to_json(c.denoise)}, {"eval", to_json(c.eval)}};
}

void from_json_strict(const Json& j, DriftConfig& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("temperatures", out.temperatures);
  r.get("lambda", out.lambda);
  std::string scaling = to_string(out.norm_scaling);
  r.get("norm_scaling", scaling);
  out.norm_scaling = parse_norm_scaling(scaling);
  std::string reduction = to_string(out.l1_reduction);
  r.get("l1_reduction", reduction);
  out.l1_reduction = parse_l1_reduction(reduction);
  r.finish();
}

void from_json_strict(const Json& j, GeneratorConfig& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("base_channels", out.base_channels);
  r.get("depth", out.depth);
  r.get("in_channels", out.in_channels);
  r.get("out_channels", out.out_channels);
  r.get("seed", out.seed);
  r.finish();
}

void from_json_strict(const Json& j, NoiseModel& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("gaussian_sigma", out.gaussian_sigma);
  r.get("streak_sigma", out.streak_sigma);
  r.get("ndct_sigma", out.ndct_sigma);
  r.finish();
}

void from_json_strict(const Json& j, TrainConfig& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("iterations", out.iterations);
  r.get("lr", out.lr);
  r.get("decay_step", out.decay_step);
  r.get("decay_factor", out.decay_factor);
  r.get("ema_decay", out.ema_decay);
  r.get("clip_norm", out.clip_norm);
  r.get("batch", out.batch);
  r.get("patch", out.patch);
  r.get("beta1", out.beta1);
  r.get("beta2", out.beta2);
  r.get("adam_eps", out.adam_eps);
  r.get("weight_decay", out.weight_decay);
  r.get("log_every", out.log_every);
  r.get("seed", out.seed);
  if (const auto* d = r.child("drift")) from_json_strict(*d, out.drift, r.path("drift"));
  if (const auto* g = r.child("generator")) from_json_strict(*g, out.generator, r.path("generator"));
  r.finish();
}

void from_json_strict(const Json& j, SimulateOptions& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("train_count", out.train_count);
  r.get("test_count", out.test_count);
  r.get("flat_count", out.flat_count);
  r.get("size", out.size);
  r.get("flat_size", out.flat_size);
  r.get("flat_intensity", out.flat_intensity);
  r.get("seed", out.seed);
  if (const auto* n = r.child("noise")) from_json_strict(*n, out.noise, r.path("noise"));
  r.finish();
}

void from_json_strict(const Json& j, DenoiseOptions& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("seed", out.seed);
  r.get("raw_weights", out.raw_weights);
  r.get("png_dir", out.png_dir);
  r.get("window_low_hu", out.window_low_hu);
  r.get("window_high_hu", out.window_high_hu);
  r.get("hu_at_zero", out.hu_at_zero);
  r.get("hu_at_one", out.hu_at_one);
  r.finish();
}

void from_json_strict(const Json& j, EvalOptions& out, const std::string& path) {
  ObjectReader r(j, path);
  r.get("data_range", out.data_range);
  r.get("roi_size", out.roi_size);
  r.get("rois_per_image", out.rois_per_image);
  r.get("flatness_factor", out.flatness_factor);
  r.get("pixel_spacing", out.pixel_spacing);
  r.finish();
}

RunConfig parse_run_config(const Json& j) {
  RunConfig cfg;
  ObjectReader r(j, "");
  if (const auto* s = r.child("simulate")) from_json_strict(*s, cfg.simulate, "/simulate");
  if (const auto* t = r.child("train")) {
    if (!t->is_object()) throw ConfigError("/train: expected an object");
    Json rest = *t;
    if (auto it = rest.find("variant"); it != rest.end()) {
      if (!it->is_string()) throw ConfigError("/train/variant: wrong type");
      cfg.variant = parse_variant(it->get<std::string>());
      apply_preset(cfg.train, *cfg.variant);
      rest.erase("variant");
    }
    from_json_strict(rest, cfg.train, "/train");
  }
  if (const auto* d = r.child("denoise")) from_json_strict(*d, cfg.denoise, "/denoise");
  if (const auto* e = r.child("eval")) from_json_strict(*e, cfg.eval, "/eval");
  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace rddm
