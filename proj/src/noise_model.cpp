#include "psm/noise_model.hpp"

namespace psm {

MlpNoiseModel::MlpNoiseModel(MlpSpec spec, MlpParams<double> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (!params_.matches(spec_)) throw ShapeError("MlpNoiseModel: parameters do not match spec");
  if (spec_.data_dim() != 2 || spec_.output_dim() != 2) throw ShapeError("MlpNoiseModel: expected a 2-D net");
}

Matrix2Xd MlpNoiseModel::predict(const Matrix2Xd& x, double t) const {
  return forward(params_, spec_, assemble_input(spec_, x, t));
}

NoisePrediction MlpNoiseModel::predict_with_trace(const Matrix2Xd& x, double t) const {
  const auto tape = forward_tape(params_, spec_, assemble_input(spec_, x, t));
  return {tape.output(), input_jacobian_trace(params_, spec_, tape)};
}

GaussianNoiseModel::GaussianNoiseModel(GaussianOracle<double> oracle, Schedule<double> schedule)
    : oracle_(std::move(oracle)), schedule_(schedule) {
  if (!(oracle_.var > 0)) throw DomainError("GaussianNoiseModel: variance must be positive");
}

Matrix2Xd GaussianNoiseModel::predict(const Matrix2Xd& x, double t) const {
  const auto m = marginal(schedule_, t);
  const double v = oracle_.diffused_var(m);
  return (m.sigma / v) * (x.colwise() - oracle_.mean * m.mu);
}

NoisePrediction GaussianNoiseModel::predict_with_trace(const Matrix2Xd& x, double t) const {
  const auto m = marginal(schedule_, t);
  const double v = oracle_.diffused_var(m);
  return {predict(x, t), Eigen::VectorXd::Constant(x.cols(), 2.0 * m.sigma / v)};
}

}  // namespace psm
