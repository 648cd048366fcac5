#include "psm/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "psm/manifest.hpp"
#include "psm/mlp_io.hpp"

namespace psm {

void BlockPartition::validate() const {
  if (boundaries.size() < 2) throw DomainError("partition: need at least two boundaries");
  if (boundaries.front() != 0.0 || boundaries.back() != 1.0) {
    throw DomainError("partition: boundaries must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (!(boundaries[i] > boundaries[i - 1])) throw DomainError("partition: boundaries must be strictly increasing");
  }
}

BlockPartition BlockPartition::intervals(std::vector<double> boundaries) {
  BlockPartition p{PartitionKind::Interval, std::move(boundaries)};
  p.validate();
  return p;
}

BlockPartition BlockPartition::uniform_intervals(int blocks) {
  if (blocks < 1) throw DomainError("partition: need at least one block");
  std::vector<double> b(std::size_t(blocks) + 1);
  for (int i = 0; i <= blocks; ++i) b[std::size_t(i)] = double(i) / blocks;
  return intervals(std::move(b));
}

BlockPartition BlockPartition::grid(int points) {
  auto p = uniform_intervals(points);
  p.kind = PartitionKind::Grid;
  return p;
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Sa: return "sa";
    case TrainMode::Tpsm: return "tpsm";
    case TrainMode::Dpsm: return "dpsm";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "sa") return TrainMode::Sa;
  if (text == "tpsm") return TrainMode::Tpsm;
  if (text == "dpsm") return TrainMode::Dpsm;
  throw std::invalid_argument("mode: expected sa, tpsm or dpsm, got '" + text + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size: must be at least 1");
  if (!(lr > 0)) throw std::invalid_argument("lr: must be positive");
  if (updates_per_block < 0) throw std::invalid_argument("updates_per_block: must be non-negative");
  if (!(t_floor > 0 && t_floor < 1)) throw std::invalid_argument("t_floor: must lie in (0, 1)");
}

double denoising_loss(const MlpParams<double>& params, const MlpSpec& spec, const Matrix2Xd& x_t,
                      const Eigen::VectorXd& t, const Matrix2Xd& eps) {
  const auto pred = forward(params, spec, assemble_input(spec, x_t, t));
  return (pred - eps).colwise().squaredNorm().mean();
}

double denoising_loss_and_grad(const MlpParams<double>& params, const MlpSpec& spec, const Matrix2Xd& x_t,
                               const Eigen::VectorXd& t, const Matrix2Xd& eps, MlpParams<double>& grads) {
  const auto tape = forward_tape(params, spec, assemble_input(spec, x_t, t));
  const Eigen::MatrixXd resid = tape.output() - eps;
  const double n = double(eps.cols());
  grads = backward(params, tape, (2.0 / n) * resid).params;
  return resid.colwise().squaredNorm().sum() / n;
}

DenoisingBatch draw_batch(const Schedule<double>& sched, const Matrix2Xd& dataset, const TimeDomain& domain,
                          int batch_size, Rng& rng) {
  DenoisingBatch b;
  b.t.resize(batch_size);
  b.eps.resize(2, batch_size);
  Matrix2Xd x0(2, batch_size);
  for (int j = 0; j < batch_size; ++j) {
    b.t(j) = domain.is_point() ? domain.lo : rng.uniform(domain.lo, domain.hi);
    x0.col(j) = dataset.col(Eigen::Index(rng.index(std::size_t(dataset.cols()))));
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    b.eps.col(j) = Vector2d(e0, e1);
  }
  b.x_t = forward_sample(sched, x0, b.t, b.eps);
  return b;
}

namespace {

TrainedBlock train_block(const BlockJob& job) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  TrainedBlock out;
  auto& rep = out.report;
  rep.block_index = job.block_index;
  rep.seed = job.derived_seed();
  rep.checkpoint = job.checkpoint;

  const Rng root(rep.seed);
  Rng init_rng = root.split(0);
  Rng batch_rng = root.split(1);
  out.params = init_params<double>(job.spec, init_rng);
  auto adam = AdamState<double>::for_params(out.params, job.config.lr);

  const int budget = job.config.updates_per_block;
  const int tail = std::min(100, budget);
  double tail_sum = 0.0;
  const int bucket = std::max(1, budget / 10);
  double bucket_sum = 0.0;
  int bucket_n = 0;
  MlpParams<double> grads;

  try {
    if (budget == 0) {
      auto b = draw_batch(job.schedule, *job.dataset, job.domain, job.config.batch_size, batch_rng);
      rep.initial_loss = rep.final_loss = denoising_loss(out.params, job.spec, b.x_t, b.t, b.eps);
    }
    for (int u = 0; u < budget; ++u) {
      auto b = draw_batch(job.schedule, *job.dataset, job.domain, job.config.batch_size, batch_rng);
      const double loss = denoising_loss_and_grad(out.params, job.spec, b.x_t, b.t, b.eps, grads);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite loss at update " + std::to_string(u));
      }
      if (u == 0) rep.initial_loss = loss;
      adam_step(adam, out.params, grads);
      rep.updates_done = u + 1;
      if (u >= budget - tail) tail_sum += loss;
      bucket_sum += loss;
      if (++bucket_n == bucket) {
        rep.loss_curve.push_back(bucket_sum / bucket_n);
        bucket_sum = 0.0;
        bucket_n = 0;
      }
    }
    if (budget > 0) rep.final_loss = tail_sum / tail;
    if (!job.checkpoint.empty()) save_checkpoint(job.checkpoint, job.spec, out.params);
  } catch (const std::exception& e) {
    rep.status = BlockStatus::Failed;
    rep.error = e.what();
  }
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

void check_job(const BlockJob& job) {
  job.config.validate();
  job.spec.validate();
  if (job.dataset == nullptr || job.dataset->cols() == 0) throw std::invalid_argument("train: empty dataset");
  if (job.spec.data_dim() != 2 || job.spec.output_dim() != 2) throw ShapeError("train: spec must map 2-D data to 2-D noise");
  if (job.domain.lo < job.config.t_floor || job.domain.hi > 1.0 || job.domain.lo > job.domain.hi) {
    throw DomainError("train: time domain must lie within [t_floor, 1]");
  }
}

}  // namespace

TrainedBlock train_block_tpsm(const BlockJob& job) {
  check_job(job);
  if (!job.spec.time_conditioned) throw std::invalid_argument("train_block_tpsm: spec must be time-conditioned");
  return train_block(job);
}

TrainedBlock train_block_dpsm(const BlockJob& job) {
  check_job(job);
  if (job.spec.time_conditioned) throw std::invalid_argument("train_block_dpsm: spec must not be time-conditioned");
  if (!job.domain.is_point()) throw std::invalid_argument("train_block_dpsm: domain must be a single time");
  return train_block(job);
}

TrainedBlock train_sa(const Matrix2Xd& dataset, const TrainConfig& config, const MlpSpec& spec,
                      const Schedule<double>& schedule, const std::filesystem::path& checkpoint) {
  BlockJob job;
  job.block_index = 0;
  job.domain = {config.t_floor, 1.0};
  job.spec = spec;
  job.config = config;
  job.schedule = schedule;
  job.dataset = &dataset;
  job.checkpoint = checkpoint;
  return train_block_tpsm(job);
}

std::vector<BlockJob> make_jobs(TrainMode mode, const BlockPartition& partition, const Matrix2Xd& dataset,
                                const TrainConfig& config, const MlpSpec& spec, const Schedule<double>& schedule,
                                const std::filesystem::path& out_dir) {
  partition.validate();
  config.validate();
  const bool grid = partition.kind == PartitionKind::Grid;
  if ((mode == TrainMode::Dpsm) != grid) {
    throw std::invalid_argument("partition: dpsm requires a grid partition, sa/tpsm an interval partition");
  }
  if (mode == TrainMode::Sa && partition.block_count() != 1) {
    throw std::invalid_argument("partition: sa trains a single block over [0, 1]");
  }
  std::vector<BlockJob> jobs;
  for (std::size_t i = 0; i < partition.block_count(); ++i) {
    BlockJob job;
    job.block_index = int(i);
    const double hi = partition.boundaries[i + 1];
    if (grid) {
      if (hi < config.t_floor) throw DomainError("partition: grid time below t_floor");
      job.domain = {hi, hi};
    } else {
      job.domain = {std::max(partition.boundaries[i], config.t_floor), hi};
      if (job.domain.lo >= job.domain.hi) throw DomainError("partition: block lies entirely below t_floor");
    }
    job.spec = spec;
    job.config = config;
    job.schedule = schedule;
    job.dataset = &dataset;
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "block_%04zu.psm", i);
      job.checkpoint = out_dir / "blocks" / name;
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

bool RunResult::ok() const {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.status == BlockStatus::Ok; });
}

double RunResult::max_block_seconds() const {
  double m = 0.0;
  for (const auto& r : reports) m = std::max(m, r.wall_seconds);
  return m;
}

double RunResult::total_block_seconds() const {
  double s = 0.0;
  for (const auto& r : reports) s += r.wall_seconds;
  return s;
}

RunResult run_partition(TrainMode mode, const BlockPartition& partition, const Matrix2Xd& dataset,
                        const TrainConfig& config, const MlpSpec& spec, const Schedule<double>& schedule,
                        int workers, const std::filesystem::path& out_dir, const std::string& dataset_ref) {
  if (workers < 1) throw std::invalid_argument("workers: must be at least 1");
  if (mode == TrainMode::Dpsm ? spec.time_conditioned : !spec.time_conditioned) {
    throw std::invalid_argument("spec: dpsm uses a time-free net, sa/tpsm a time-conditioned one");
  }
  const auto jobs = make_jobs(mode, partition, dataset, config, spec, schedule, out_dir);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir / "blocks");

  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.reports.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      const auto& job = jobs[i];
      try {
        result.reports[i] = (mode == TrainMode::Dpsm ? train_block_dpsm(job) : train_block_tpsm(job)).report;
      } catch (const std::exception& e) {
        auto& rep = result.reports[i];
        rep.block_index = job.block_index;
        rep.seed = job.derived_seed();
        rep.status = BlockStatus::Failed;
        rep.error = e.what();
      }
    }
  };
  const int threads = std::min<int>(workers, int(jobs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!out_dir.empty()) {
    Manifest m;
    m.label = to_string(mode);
    m.mode = mode;
    m.schedule = schedule;
    m.partition = partition;
    m.config = config;
    m.dataset = dataset_ref;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& job = jobs[i];
      const auto& rep = result.reports[i];
      ManifestBlock b;
      b.index = job.block_index;
      b.t_lo = job.domain.lo;
      b.t_hi = job.domain.hi;
      b.checkpoint = std::filesystem::relative(job.checkpoint, out_dir).generic_string();
      b.spec = job.spec;
      b.seed = rep.seed;
      b.updates = rep.updates_done;
      b.status = rep.status;
      b.error = rep.error;
      b.initial_loss = rep.initial_loss;
      b.final_loss = rep.final_loss;
      b.wall_seconds = rep.wall_seconds;
      m.blocks.push_back(std::move(b));
    }
    result.manifest = out_dir / "manifest.json";
    write_manifest(result.manifest, m);
  }
  return result;
}

}  // namespace psm
