#include "psm/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "psm/rng.hpp"

namespace psm {
namespace {

constexpr double kTimeSlack = 1e-12;

struct FieldEval {
  Matrix2Xd f;
  Eigen::VectorXd div;
};

FieldEval eval_block(const ComposedModel& model, std::size_t k, const Matrix2Xd& x, double t, bool with_div) {
  const auto& block = model.blocks[k];
  const double tt = model.mode == FlowMode::PiecewiseConstant ? block.anchor : t;
  const auto m = marginal(model.schedule, tt);
  if (!(m.sigma > 0)) throw DomainError("flow: sigma vanishes at t = " + std::to_string(tt));
  const double half_b = model.schedule.rate(tt) / 2.0;
  FieldEval out;
  if (with_div) {
    auto p = block.model->predict_with_trace(x, tt);
    out.f = -half_b * (x - p.eps / m.sigma);
    out.div = -half_b * (2.0 - p.trace.array() / m.sigma);
  } else {
    out.f = -half_b * (x - block.model->predict(x, tt) / m.sigma);
  }
  return out;
}

void mark_failures(const Matrix2Xd& x, const Eigen::VectorXd* logp, int step, std::vector<int>& failed) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (failed[std::size_t(j)] >= 0) continue;
    if (!x.col(j).allFinite() || (logp && !std::isfinite((*logp)(j)))) failed[std::size_t(j)] = step;
  }
}

}  // namespace

void ComposedModel::validate() const {
  if (blocks.empty()) throw DomainError("ComposedModel: no blocks");
  if (!(t_floor > 0 && t_floor < 1)) throw DomainError("ComposedModel: t_floor must lie in (0, 1)");
  if (std::abs(blocks.front().t_lo - t_floor) > kTimeSlack || blocks.back().t_hi != 1.0) {
    throw DomainError("ComposedModel: blocks must tile [t_floor, 1]");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (!b.model) throw DomainError("ComposedModel: block without a model");
    if (!(b.t_hi > b.t_lo)) throw DomainError("ComposedModel: empty block");
    if (i + 1 < blocks.size() && blocks[i + 1].t_lo != b.t_hi) throw DomainError("ComposedModel: gap between blocks");
    if (mode == FlowMode::PiecewiseConstant && b.anchor != b.t_hi) {
      throw DomainError("ComposedModel: piecewise-constant anchor must be the block's grid time");
    }
  }
}

std::size_t ComposedModel::block_at(double t) const {
  if (!(t >= t_floor - kTimeSlack && t <= 1.0)) {
    throw DomainError("flow: t = " + std::to_string(t) + " outside [t_floor, 1]");
  }
  if (mode == FlowMode::Interval) {
    auto it = std::upper_bound(blocks.begin(), blocks.end(), t,
                               [](double v, const FlowBlock& b) { return v < b.t_lo; });
    return it == blocks.begin() ? 0 : std::size_t(it - blocks.begin()) - 1;
  }
  auto it = std::lower_bound(blocks.begin(), blocks.end(), t,
                             [](const FlowBlock& b, double v) { return b.t_hi < v; });
  return std::min(std::size_t(it - blocks.begin()), blocks.size() - 1);
}

ComposedModel ComposedModel::single(std::shared_ptr<const NoiseModel> model, const Schedule<double>& schedule,
                                    double t_floor) {
  ComposedModel m;
  m.schedule = schedule;
  m.t_floor = t_floor;
  m.blocks.push_back({t_floor, 1.0, 1.0, std::move(model)});
  return m;
}

void IntegrationConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("integration: steps must be at least 1");
  if (t_start == t_end) throw std::invalid_argument("integration: t_start equals t_end");
  if ((direction == Direction::Forward) != (t_end > t_start)) {
    throw std::invalid_argument("integration: direction disagrees with t_start/t_end");
  }
}

bool PathBatch::all_ok() const {
  return std::all_of(failed_step.begin(), failed_step.end(), [](int s) { return s < 0; });
}

Matrix2Xd ode_field(const ComposedModel& model, const Matrix2Xd& x, double t) {
  return eval_block(model, model.block_at(t), x, t, false).f;
}

Eigen::VectorXd divergence(const ComposedModel& model, const Matrix2Xd& x, double t) {
  return eval_block(model, model.block_at(t), x, t, true).div;
}

Vector2d ode_field(const ComposedModel& model, const Vector2d& x, double t) {
  return ode_field(model, Matrix2Xd(x), t).col(0);
}

double divergence(const ComposedModel& model, const Vector2d& x, double t) {
  return divergence(model, Matrix2Xd(x), t)(0);
}

std::vector<Segment> step_segments(const ComposedModel& model, const IntegrationConfig& cfg) {
  cfg.validate();
  const double lo = std::min(cfg.t_start, cfg.t_end);
  const double hi = std::max(cfg.t_start, cfg.t_end);
  if (lo < model.t_floor - kTimeSlack || hi > 1.0) {
    throw DomainError("integration: range must lie within [t_floor, 1]");
  }
  std::vector<Segment> segs;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    const double a = std::max(lo, model.blocks[k].t_lo);
    const double b = std::min(hi, model.blocks[k].t_hi);
    if (!(b > a)) continue;
    const int n = std::max(1, int(std::llround(cfg.steps * (b - a) / (hi - lo))));
    segs.push_back({k, a, b, n});
  }
  if (cfg.direction == Direction::Backward) {
    std::reverse(segs.begin(), segs.end());
    for (auto& s : segs) std::swap(s.t_from, s.t_to);
  }
  return segs;
}

PathBatch integrate(const ComposedModel& model, const Matrix2Xd& x_init, const IntegrationConfig& cfg,
                    bool with_logp) {
  model.validate();
  PathBatch out;
  out.states = x_init;
  out.delta_logp = Eigen::VectorXd::Zero(x_init.cols());
  out.failed_step.assign(std::size_t(x_init.cols()), -1);
  auto& x = out.states;
  auto& lp = out.delta_logp;

  int step = 0;
  for (const auto& seg : step_segments(model, cfg)) {
    const double h = (seg.t_to - seg.t_from) / seg.steps;
    for (int i = 0; i < seg.steps; ++i, ++step) {
      const double t = seg.t_from + i * h;
      if (cfg.method == Method::Euler) {
        auto e = eval_block(model, seg.block, x, t, with_logp);
        x += h * e.f;
        if (with_logp) lp += h * e.div;
      } else {
        auto k1 = eval_block(model, seg.block, x, t, with_logp);
        auto k2 = eval_block(model, seg.block, x + (h / 2) * k1.f, t + h / 2, with_logp);
        auto k3 = eval_block(model, seg.block, x + (h / 2) * k2.f, t + h / 2, with_logp);
        auto k4 = eval_block(model, seg.block, x + h * k3.f, t + h, with_logp);
        x += (h / 6) * (k1.f + 2 * k2.f + 2 * k3.f + k4.f);
        if (with_logp) lp += (h / 6) * (k1.div + 2 * k2.div + 2 * k3.div + k4.div);
      }
      mark_failures(x, with_logp ? &lp : nullptr, step, out.failed_step);
    }
  }
  out.steps_taken = step;
  return out;
}

PathResult integrate(const ComposedModel& model, const Vector2d& x_init, const IntegrationConfig& cfg,
                     bool with_logp) {
  auto batch = integrate(model, Matrix2Xd(x_init), cfg, with_logp);
  if (batch.failed_step[0] >= 0) {
    throw IntegrationError("integration blew up at step " + std::to_string(batch.failed_step[0]),
                           batch.failed_step[0]);
  }
  return {batch.states.col(0), batch.delta_logp(0), batch.steps_taken};
}

double TerminalPrior::log_density(const Vector2d& x) const {
  return -(x - mean).squaredNorm() / (2.0 * var) - std::log(2.0 * std::numbers::pi * var);
}

Eigen::VectorXd log_likelihood(const ComposedModel& model, const Matrix2Xd& x0, const IntegrationConfig& cfg,
                               const TerminalPrior& prior) {
  if (cfg.direction != Direction::Forward) throw std::invalid_argument("log_likelihood: integration must run forward");
  auto path = integrate(model, x0, cfg, true);
  Eigen::VectorXd out(x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    out(j) = path.failed_step[std::size_t(j)] >= 0 ? std::numeric_limits<double>::quiet_NaN()
                                                    : prior.log_density(path.states.col(j)) + path.delta_logp(j);
  }
  return out;
}

double log_likelihood(const ComposedModel& model, const Vector2d& x0, const IntegrationConfig& cfg,
                      const TerminalPrior& prior) {
  if (cfg.direction != Direction::Forward) throw std::invalid_argument("log_likelihood: integration must run forward");
  auto path = integrate(model, x0, cfg, true);
  return prior.log_density(path.terminal_state) + path.delta_logp;
}

Matrix2Xd generate_ode(const ComposedModel& model, const Matrix2Xd& z, const IntegrationConfig& cfg) {
  if (cfg.direction != Direction::Backward) throw std::invalid_argument("generate_ode: integration must run backward");
  auto path = integrate(model, z, cfg, false);
  if (!path.all_ok()) {
    const auto it = std::find_if(path.failed_step.begin(), path.failed_step.end(), [](int s) { return s >= 0; });
    throw IntegrationError("generation blew up for sample " + std::to_string(it - path.failed_step.begin()) +
                               " at step " + std::to_string(*it),
                           *it);
  }
  return path.states;
}

Vector2d generate_ode(const ComposedModel& model, const Vector2d& z, const IntegrationConfig& cfg) {
  return generate_ode(model, Matrix2Xd(z), cfg).col(0);
}

Matrix2Xd generate_sde(const ComposedModel& model, const Matrix2Xd& z, int steps, std::uint64_t seed) {
  model.validate();
  const auto cfg = IntegrationConfig::generation(Method::Euler, steps, model.t_floor);
  const Eigen::Index n = z.cols();
  const Rng root(seed);
  std::vector<Rng> streams;
  streams.reserve(std::size_t(n));
  for (Eigen::Index j = 0; j < n; ++j) streams.push_back(root.split(std::uint64_t(j)));

  Matrix2Xd x = z;
  Matrix2Xd noise(2, n);
  int step = 0;
  for (const auto& seg : step_segments(model, cfg)) {
    const double dt = (seg.t_from - seg.t_to) / seg.steps;
    const auto& block = model.blocks[seg.block];
    for (int i = 0; i < seg.steps; ++i, ++step) {
      const double t = seg.t_from - i * dt;
      const double tt = model.mode == FlowMode::PiecewiseConstant ? block.anchor : t;
      const auto m = marginal(model.schedule, tt);
      const double b = model.schedule.rate(tt);
      const Matrix2Xd score = -block.model->predict(x, tt) / m.sigma;
      for (Eigen::Index j = 0; j < n; ++j) {
        auto& r = streams[std::size_t(j)];
        const double n0 = r.normal();
        const double n1 = r.normal();
        noise.col(j) = Vector2d(n0, n1);
      }
      x += (b * dt) * (0.5 * x + score) + std::sqrt(b * dt) * noise;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!x.col(j).allFinite()) {
          throw IntegrationError("reverse SDE blew up for sample " + std::to_string(j) + " at step " +
                                     std::to_string(step),
                                 step);
        }
      }
    }
  }
  return x;
}

Vector2d generate_sde(const ComposedModel& model, const Vector2d& z, int steps, std::uint64_t seed) {
  return generate_sde(model, Matrix2Xd(z), steps, seed).col(0);
}

double DensityGrid::trapezoid_mass() const {
  const int r = resolution;
  const double dx = (bounds.x_max - bounds.x_min) / (r - 1);
  const double dy = (bounds.y_max - bounds.y_min) / (r - 1);
  double mass = 0.0;
  for (int i = 0; i < r; ++i) {
    const double wi = (i == 0 || i == r - 1) ? 0.5 : 1.0;
    for (int j = 0; j < r; ++j) {
      const double wj = (j == 0 || j == r - 1) ? 0.5 : 1.0;
      const double v = values(i, j);
      if (std::isfinite(v)) mass += wi * wj * v;
    }
  }
  return mass * dx * dy;
}

std::size_t DensityGrid::failed_cells() const {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) n += !std::isfinite(values.data()[i]);
  return n;
}

DensityGrid density_grid(const ComposedModel& model, const GridBounds& bounds, int resolution,
                         const IntegrationConfig& cfg, const TerminalPrior& prior, int workers) {
  if (resolution < 2) throw std::invalid_argument("density_grid: resolution must be at least 2");
  if (!(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min)) {
    throw std::invalid_argument("density_grid: empty bounds");
  }
  DensityGrid grid;
  grid.bounds = bounds;
  grid.resolution = resolution;
  grid.values.resize(resolution, resolution);

  const Eigen::Index cells = Eigen::Index(resolution) * resolution;
  Matrix2Xd pts(2, cells);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      pts(0, r * resolution + c) = bounds.x_min + (bounds.x_max - bounds.x_min) * c / (resolution - 1);
      pts(1, r * resolution + c) = bounds.y_min + (bounds.y_max - bounds.y_min) * r / (resolution - 1);
    }
  }

  // Chunks are independent; a worker writes only its own cells.
  constexpr Eigen::Index kChunk = 512;
  const Eigen::Index chunks = (cells + kChunk - 1) / kChunk;
  Eigen::VectorXd logp(cells);
  std::atomic<Eigen::Index> next{0};
  auto work = [&] {
    for (Eigen::Index c; (c = next.fetch_add(1)) < chunks;) {
      const Eigen::Index begin = c * kChunk;
      const Eigen::Index len = std::min(kChunk, cells - begin);
      logp.segment(begin, len) = log_likelihood(model, Matrix2Xd(pts.middleCols(begin, len)), cfg, prior);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::max(1, workers); ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) grid.values(r, c) = std::exp(logp(r * resolution + c));
  }
  return grid;
}

void write_density_grid(const std::filesystem::path& path, const DensityGrid& grid) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "# density_grid x_min=" << grid.bounds.x_min << " x_max=" << grid.bounds.x_max
      << " y_min=" << grid.bounds.y_min << " y_max=" << grid.bounds.y_max << " resolution=" << grid.resolution
      << " failed=" << grid.failed_cells() << '\n';
  for (int r = 0; r < grid.resolution; ++r) {
    for (int c = 0; c < grid.resolution; ++c) {
      const double v = grid.values(r, c);
      if (c) out << ' ';
      if (std::isfinite(v)) {
        out << v;
      } else {
        out << "nan";
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace psm
