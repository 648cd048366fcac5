#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <vector>

#include "psm/noise_model.hpp"
#include "psm/schedule.hpp"

namespace psm {

enum class FlowMode { Interval, PiecewiseConstant };

// A block owns the time range [t_lo, t_hi]. In PiecewiseConstant mode the
// field inside the block is frozen at `anchor` (the block's grid time).
struct FlowBlock {
  double t_lo = 0.0;
  double t_hi = 1.0;
  double anchor = 1.0;
  std::shared_ptr<const NoiseModel> model;
};

struct ComposedModel {
  Schedule<double> schedule;
  FlowMode mode = FlowMode::Interval;
  double t_floor = 1e-5;
  std::vector<FlowBlock> blocks;

  void validate() const;

  // Interval: [t_i, t_{i+1}) with the last block closed.
  // PiecewiseConstant: (t_{i-1}, t_i] with the first block closed.
  std::size_t block_at(double t) const;

  // One block covering [t_floor, 1].
  static ComposedModel single(std::shared_ptr<const NoiseModel> model, const Schedule<double>& schedule = {},
                              double t_floor = 1e-5);
};

enum class Method { Euler, Rk4 };
enum class Direction { Forward, Backward };

struct IntegrationConfig {
  Method method = Method::Rk4;
  int steps = 1000;
  Direction direction = Direction::Forward;
  double t_start = 1e-5;
  double t_end = 1.0;

  void validate() const;

  static IntegrationConfig likelihood(Method method, int steps, double t_floor = 1e-5) {
    return {method, steps, Direction::Forward, t_floor, 1.0};
  }
  static IntegrationConfig generation(Method method, int steps, double t_floor = 1e-5) {
    return {method, steps, Direction::Backward, 1.0, t_floor};
  }
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct PathResult {
  Vector2d terminal_state;
  double delta_logp = 0.0;  // integral of tr(df/dx) dt from t_start to t_end
  int steps_taken = 0;
};

struct PathBatch {
  Matrix2Xd states;
  Eigen::VectorXd delta_logp;
  std::vector<int> failed_step;  // -1 when the column stayed finite
  int steps_taken = 0;

  bool all_ok() const;
};

// Probability-flow drift f = -b/2 (x + s) with s = -eps / sigma from the owning block.
Vector2d ode_field(const ComposedModel& model, const Vector2d& x, double t);
// tr(df/dx) = -b/2 (2 + tr ds/dx), exact.
double divergence(const ComposedModel& model, const Vector2d& x, double t);

Matrix2Xd ode_field(const ComposedModel& model, const Matrix2Xd& x, double t);
Eigen::VectorXd divergence(const ComposedModel& model, const Matrix2Xd& x, double t);

// One segment per block crossed; step endpoints fall on block boundaries.
struct Segment {
  std::size_t block;
  double t_from;
  double t_to;
  int steps;
};
std::vector<Segment> step_segments(const ComposedModel& model, const IntegrationConfig& cfg);

PathBatch integrate(const ComposedModel& model, const Matrix2Xd& x_init, const IntegrationConfig& cfg,
                    bool with_logp);
// Throws IntegrationError on blowup.
PathResult integrate(const ComposedModel& model, const Vector2d& x_init, const IntegrationConfig& cfg,
                     bool with_logp);

// Isotropic Gaussian used as the density at the end of the forward flow.
struct TerminalPrior {
  Vector2d mean = Vector2d::Zero();
  double var = 1.0;

  double log_density(const Vector2d& x) const;
};

// log p(x0) = log prior(x(1)) + delta_logp, in nats. NaN for columns that blew up.
Eigen::VectorXd log_likelihood(const ComposedModel& model, const Matrix2Xd& x0, const IntegrationConfig& cfg,
                               const TerminalPrior& prior = {});
double log_likelihood(const ComposedModel& model, const Vector2d& x0, const IntegrationConfig& cfg,
                      const TerminalPrior& prior = {});

inline double nats_to_bits_per_dim(double nats, int dim) { return nats / (double(dim) * 0.69314718055994530942); }

Matrix2Xd generate_ode(const ComposedModel& model, const Matrix2Xd& z, const IntegrationConfig& cfg);
Vector2d generate_ode(const ComposedModel& model, const Vector2d& z, const IntegrationConfig& cfg);

// Euler-Maruyama on dx = -b [x/2 + s] dt + sqrt(b) dw from t = 1 down to t_floor.
// Column i draws its noise from stream i of `seed`.
Matrix2Xd generate_sde(const ComposedModel& model, const Matrix2Xd& z, int steps, std::uint64_t seed);
Vector2d generate_sde(const ComposedModel& model, const Vector2d& z, int steps, std::uint64_t seed);

struct GridBounds {
  double x_min = -4.0, x_max = 4.0, y_min = -4.0, y_max = 4.0;
};

// Density on (res x res) grid nodes including the box edges. Row r is
// y = y_min + r * dy, column c is x = x_min + c * dx. Failed cells are NaN.
struct DensityGrid {
  GridBounds bounds;
  int resolution = 0;
  Eigen::MatrixXd values;

  double trapezoid_mass() const;
  std::size_t failed_cells() const;
};

DensityGrid density_grid(const ComposedModel& model, const GridBounds& bounds, int resolution,
                         const IntegrationConfig& cfg, const TerminalPrior& prior = {}, int workers = 1);

void write_density_grid(const std::filesystem::path& path, const DensityGrid& grid);

}  // namespace psm
