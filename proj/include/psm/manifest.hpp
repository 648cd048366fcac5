#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "psm/schedule.hpp"
#include "psm/train.hpp"

namespace psm {

struct ComposedModel;

inline constexpr int kManifestFormatVersion = 1;

// One trained block. `oracle` replaces the checkpoint for analytic blocks.
struct ManifestBlock {
  int index = 0;
  double t_lo = 0.0;
  double t_hi = 1.0;
  std::string checkpoint;
  std::optional<GaussianOracle<double>> oracle;
  MlpSpec spec;
  std::uint64_t seed = 0;
  int updates = 0;
  BlockStatus status = BlockStatus::Ok;
  std::string error;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
};

struct Manifest {
  int format_version = kManifestFormatVersion;
  std::string label;
  TrainMode mode = TrainMode::Tpsm;
  Schedule<double> schedule;
  BlockPartition partition;
  TrainConfig config;
  std::string dataset;
  std::vector<ManifestBlock> blocks;

  bool ok() const;
  double max_block_seconds() const;
  double total_block_seconds() const;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Loads every block; checkpoint paths are resolved relative to the manifest's directory.
ComposedModel load_composed_model(const Manifest& m, const std::filesystem::path& base_dir);
ComposedModel load_composed_model(const std::filesystem::path& manifest_path);

}  // namespace psm
