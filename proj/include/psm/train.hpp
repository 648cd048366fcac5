#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "psm/adam.hpp"
#include "psm/mlp.hpp"
#include "psm/schedule.hpp"

namespace psm {

enum class PartitionKind { Interval, Grid };

// Interval: block i trains on [t_i, t_{i+1}]. Grid: block i trains at the
// single time t_{i+1}; t_0 = 0 carries no model.
struct BlockPartition {
  PartitionKind kind = PartitionKind::Interval;
  std::vector<double> boundaries = {0.0, 1.0};

  void validate() const;
  std::size_t block_count() const { return boundaries.size() - 1; }

  static BlockPartition intervals(std::vector<double> boundaries);
  static BlockPartition uniform_intervals(int blocks);
  static BlockPartition grid(int points);
};

enum class TrainMode { Sa, Tpsm, Dpsm };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  int batch_size = 512;
  double lr = 1e-3;
  int updates_per_block = 1000;
  std::uint64_t seed = 0;
  double t_floor = 1e-5;

  void validate() const;
};

struct TimeDomain {
  double lo = 0.0;
  double hi = 1.0;
  bool is_point() const { return lo == hi; }
};

struct BlockJob {
  int block_index = 0;
  TimeDomain domain;
  MlpSpec spec;
  TrainConfig config;
  Schedule<double> schedule;
  const Matrix2Xd* dataset = nullptr;
  std::filesystem::path checkpoint;  // empty: keep parameters in memory only

  std::uint64_t derived_seed() const { return config.seed ^ std::uint64_t(block_index); }
};

enum class BlockStatus { Ok, Failed };

struct TrainReport {
  int block_index = 0;
  std::uint64_t seed = 0;
  BlockStatus status = BlockStatus::Ok;
  std::string error;
  double initial_loss = 0.0;  // loss of the untrained model on the first batch
  double final_loss = 0.0;    // mean over the last min(100, updates) updates
  int updates_done = 0;
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::vector<double> loss_curve;  // mean loss over each tenth of the budget
};

struct TrainedBlock {
  TrainReport report;
  MlpParams<double> params;
};

// Mean over the batch of ||eps_theta(x_t, t) - eps||^2.
double denoising_loss(const MlpParams<double>& params, const MlpSpec& spec, const Matrix2Xd& x_t,
                      const Eigen::VectorXd& t, const Matrix2Xd& eps);

double denoising_loss_and_grad(const MlpParams<double>& params, const MlpSpec& spec, const Matrix2Xd& x_t,
                               const Eigen::VectorXd& t, const Matrix2Xd& eps, MlpParams<double>& grads);

// One noisy training batch: times, clean-data indices, noise and x_t.
struct DenoisingBatch {
  Eigen::VectorXd t;
  Matrix2Xd eps;
  Matrix2Xd x_t;
};

DenoisingBatch draw_batch(const Schedule<double>& sched, const Matrix2Xd& dataset, const TimeDomain& domain,
                          int batch_size, Rng& rng);

// Time-conditioned net on an interval domain.
TrainedBlock train_block_tpsm(const BlockJob& job);
// Time-free net at a single grid time.
TrainedBlock train_block_dpsm(const BlockJob& job);
// Single time-conditioned net over [t_floor, 1]; delegates to train_block_tpsm.
TrainedBlock train_sa(const Matrix2Xd& dataset, const TrainConfig& config, const MlpSpec& spec,
                      const Schedule<double>& schedule = {}, const std::filesystem::path& checkpoint = {});

// One job per block, clipped to t_floor.
std::vector<BlockJob> make_jobs(TrainMode mode, const BlockPartition& partition, const Matrix2Xd& dataset,
                                const TrainConfig& config, const MlpSpec& spec, const Schedule<double>& schedule,
                                const std::filesystem::path& out_dir);

struct RunResult {
  std::vector<TrainReport> reports;
  std::filesystem::path manifest;
  double wall_seconds = 0.0;

  bool ok() const;
  double max_block_seconds() const;
  double total_block_seconds() const;
};

// Trains every block on `workers` threads and writes checkpoints plus
// manifest.json under out_dir. Results do not depend on the worker count.
RunResult run_partition(TrainMode mode, const BlockPartition& partition, const Matrix2Xd& dataset,
                        const TrainConfig& config, const MlpSpec& spec, const Schedule<double>& schedule,
                        int workers, const std::filesystem::path& out_dir, const std::string& dataset_ref = {});

}  // namespace psm
