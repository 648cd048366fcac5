#pragma once

#include <memory>

#include "psm/mlp.hpp"
#include "psm/schedule.hpp"

namespace psm {

struct NoisePrediction {
  Matrix2Xd eps;
  Eigen::VectorXd trace;  // tr(d eps / d x) per column
};

// Noise predictor eps(x, t) for a batch of 2-D points (one per column).
// The score it implies is s = -eps / sigma_t.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual Matrix2Xd predict(const Matrix2Xd& x, double t) const = 0;
  virtual NoisePrediction predict_with_trace(const Matrix2Xd& x, double t) const = 0;
};

class MlpNoiseModel final : public NoiseModel {
 public:
  MlpNoiseModel(MlpSpec spec, MlpParams<double> params);

  Matrix2Xd predict(const Matrix2Xd& x, double t) const override;
  NoisePrediction predict_with_trace(const Matrix2Xd& x, double t) const override;

  const MlpSpec& spec() const { return spec_; }
  const MlpParams<double>& params() const { return params_; }

 private:
  MlpSpec spec_;
  MlpParams<double> params_;
};

// Exact noise of a diffused Gaussian: eps = sigma_t (x - mean mu_t) / (var mu_t^2 + sigma_t^2).
class GaussianNoiseModel final : public NoiseModel {
 public:
  GaussianNoiseModel(GaussianOracle<double> oracle, Schedule<double> schedule);

  Matrix2Xd predict(const Matrix2Xd& x, double t) const override;
  NoisePrediction predict_with_trace(const Matrix2Xd& x, double t) const override;

  const GaussianOracle<double>& oracle() const { return oracle_; }

 private:
  GaussianOracle<double> oracle_;
  Schedule<double> schedule_;
};

}  // namespace psm
