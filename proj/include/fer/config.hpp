#pragma once

#include "fer/augment.hpp"
#include "fer/controller.hpp"
#include "fer/dataset.hpp"
#include "fer/loss.hpp"
#include "fer/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fer {

enum class BackendKind { Reference, ExternalAdapter };

std::string_view backend_kind_name(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::Reference;
  int feature_side = 48; ///< reference backend input grid (feature_side^2 inputs)
  double dropout = 0.5;
  std::string runtime;        ///< external adapter name
  std::string weights_source; ///< external adapter weights
  int feature_dim = 1408;     ///< external backbone pooled feature width
  int input_side = 260;
};

struct DataConfig {
  std::string csv;
  std::string manifest;
  Fraction train_fraction;
  Usage eval_partition = Usage::PrivateTest;
  int workers = 1;
};

/// Every field defaults to the reference two-phase recipe.
struct RunConfig {
  std::uint64_t seed = 42;
  int batch_size = 32;
  int num_classes = kNumEmotions;
  DataConfig data;
  std::vector<PhaseConfig> phases = default_phases();
  LossConfig loss;
  AugmentConfig augment;
  CallbackConfig callbacks;
  BackendConfig backend;
  bool mixed_precision = false;
  std::string prior_work; ///< JSON file of cited comparison rows; empty for none

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

nlohmann::ordered_json config_to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected. Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& j);

/// Reads a config file and resolves relative data paths against its directory.
RunConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON serialization.
std::string config_digest(const RunConfig& config);

} // namespace fer
