#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rddm/sim_data.hpp"
#include "rddm/trainer.hpp"

namespace rddm {

using Json = nlohmann::ordered_json;

struct SimulateOptions {
  std::size_t train_count = 64;
  std::size_t test_count = 16;
  std::size_t flat_count = 8;
  std::size_t size = 64;
  std::size_t flat_size = 128;
  double flat_intensity = 0.5;
  NoiseModel noise;
  std::uint64_t seed = 0;
};

struct DenoiseOptions {
  std::uint64_t seed = 0;
  bool raw_weights = false;
  std::string png_dir;  // empty: no PNG export
  // display window in HU and the HU values that data 0 and 1 map to
  double window_low_hu = -160.0;
  double window_high_hu = 240.0;
  double hu_at_zero = -1000.0;
  double hu_at_one = 1000.0;
};

struct EvalOptions {
  double data_range = 1.0;
  std::size_t roi_size = 64;
  std::size_t rois_per_image = 4;
  double flatness_factor = 3.0;
  double pixel_spacing = 0.0;  // 0: report cycles/pixel
};

/// Every command's settings; each section is optional in the document and
/// falls back to the defaults above.
struct RunConfig {
  SimulateOptions simulate;
  TrainConfig train;
  std::optional<Variant> variant;
  DenoiseOptions denoise;
  EvalOptions eval;
};

Json to_json(const DriftConfig& c);
Json to_json(const GeneratorConfig& c);
/// Noise seeds are derived per sample from the dataset seed, so the model's own
/// seed field is not part of the document.
Json to_json(const NoiseModel& c);
Json to_json(const TrainConfig& c);
Json to_json(const SimulateOptions& c);
Json to_json(const DenoiseOptions& c);
Json to_json(const EvalOptions& c);
Json to_json(const RunConfig& c);

/// Strict readers: unknown keys and wrong types raise ConfigError naming the
/// JSON path. Missing keys keep the value already in `out`.
void from_json_strict(const Json& j, DriftConfig& out, const std::string& path);
void from_json_strict(const Json& j, GeneratorConfig& out, const std::string& path);
void from_json_strict(const Json& j, NoiseModel& out, const std::string& path);
void from_json_strict(const Json& j, TrainConfig& out, const std::string& path);
void from_json_strict(const Json& j, SimulateOptions& out, const std::string& path);
void from_json_strict(const Json& j, DenoiseOptions& out, const std::string& path);
void from_json_strict(const Json& j, EvalOptions& out, const std::string& path);

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace rddm
