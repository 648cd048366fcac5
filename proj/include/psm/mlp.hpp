#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psm/rng.hpp"

namespace psm {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Activation { Elu };

// Layer widths include the input and output dimension. A time-conditioned
// net sees [x_1, x_2, t, t]; a time-free one sees [x_1, x_2].
struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::Elu;
  bool time_conditioned = false;

  static constexpr int kTimeInputs = 2;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int data_dim() const { return time_conditioned ? input_dim() - kTimeInputs : input_dim(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  void validate() const {
    if (widths.size() < 2) throw ShapeError("MlpSpec: need at least two widths");
    for (int w : widths) {
      if (w <= 0) throw ShapeError("MlpSpec: widths must be positive");
    }
    if (time_conditioned && input_dim() <= kTimeInputs) {
      throw ShapeError("MlpSpec: time-conditioned input must be data_dim + 2");
    }
  }

  bool operator==(const MlpSpec&) const = default;

  // 2-D score network with three ELU hidden layers (100, 150, 100).
  static MlpSpec score_net(bool time_conditioned) {
    MlpSpec spec;
    spec.widths = {time_conditioned ? 4 : 2, 100, 150, 100, 2};
    spec.time_conditioned = time_conditioned;
    return spec;
  }
};

template <typename Scalar = double>
struct MlpParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<Vector> biases;

  static MlpParams zeros(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      p.weights.push_back(Matrix::Zero(spec.widths[l + 1], spec.widths[l]));
      p.biases.push_back(Vector::Zero(spec.widths[l + 1]));
    }
    return p;
  }

  static MlpParams zeros_like(const MlpParams& other) {
    MlpParams p;
    for (const auto& w : other.weights) p.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : other.biases) p.biases.push_back(Vector::Zero(b.size()));
    return p;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += std::size_t(w.size());
    for (const auto& b : biases) n += std::size_t(b.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& w : weights) {
      if (!w.allFinite()) return false;
    }
    for (const auto& b : biases) {
      if (!b.allFinite()) return false;
    }
    return true;
  }

  bool matches(const MlpSpec& spec) const {
    if (weights.size() != spec.layer_count() || biases.size() != spec.layer_count()) return false;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      if (weights[l].rows() != spec.widths[l + 1] || weights[l].cols() != spec.widths[l]) return false;
      if (biases[l].size() != spec.widths[l + 1]) return false;
    }
    return true;
  }

  // Visits every scalar parameter in serialization order.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) f(weights[l](r, c));
      }
      for (Eigen::Index r = 0; r < biases[l].size(); ++r) f(biases[l](r));
    }
  }

  bool operator==(const MlpParams& o) const {
    if (weights.size() != o.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols()) return false;
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
template <typename Scalar = double>
MlpParams<Scalar> init_params(const MlpSpec& spec, Rng& rng) {
  auto p = MlpParams<Scalar>::zeros(spec);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = std::sqrt(1.0 / double(spec.widths[l]));
    auto& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = Scalar(rng.uniform(-bound, bound));
    }
  }
  return p;
}

namespace detail {

template <typename Derived>
auto elu(const Eigen::ArrayBase<Derived>& z) {
  return (z > 0).select(z, z.expm1());
}

template <typename Derived>
auto elu_derivative(const Eigen::ArrayBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return (z > 0).select(Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>::Ones(z.rows(), z.cols()), z.exp());
}

inline void check_input(const MlpSpec& spec, Eigen::Index rows) {
  if (rows != spec.input_dim()) {
    throw ShapeError("mlp: input has " + std::to_string(rows) + " rows, expected " +
                     std::to_string(spec.input_dim()));
  }
}

}  // namespace detail

// Pre-activations of every layer for a batch (one example per column).
template <typename Scalar = double>
struct MlpTape {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix input;
  std::vector<Matrix> pre;   // pre[l] = W_l a_l + b_l
  std::vector<Matrix> post;  // post[l] = elu(pre[l]) for hidden layers

  const Matrix& output() const { return pre.back(); }
};

template <typename Scalar, typename Derived>
MlpTape<Scalar> forward_tape(const MlpParams<Scalar>& params, const MlpSpec& spec,
                             const Eigen::MatrixBase<Derived>& input) {
  detail::check_input(spec, input.rows());
  if (!params.matches(spec)) throw ShapeError("mlp: parameters do not match spec");
  MlpTape<Scalar> tape;
  tape.input = input;
  const std::size_t layers = spec.layer_count();
  tape.pre.resize(layers);
  tape.post.resize(layers - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& a = l == 0 ? tape.input : tape.post[l - 1];
    tape.pre[l].noalias() = params.weights[l] * a;
    tape.pre[l].colwise() += params.biases[l];
    if (l + 1 < layers) tape.post[l] = detail::elu(tape.pre[l].array()).matrix();
  }
  return tape;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(const MlpParams<Scalar>& params,
                                                             const MlpSpec& spec,
                                                             const Eigen::MatrixBase<Derived>& input) {
  return forward_tape(params, spec, input).output();
}

template <typename Scalar = double>
struct MlpGradients {
  MlpParams<Scalar> params;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> input;
};

// Reverse pass for the scalar sum_j <upstream_j, output_j>. Parameter
// gradients are summed over the batch; input gradients are per column.
template <typename Scalar, typename Derived>
MlpGradients<Scalar> backward(const MlpParams<Scalar>& params, const MlpTape<Scalar>& tape,
                              const Eigen::MatrixBase<Derived>& upstream, bool want_params = true) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const std::size_t layers = params.weights.size();
  if (upstream.rows() != tape.output().rows() || upstream.cols() != tape.output().cols()) {
    throw ShapeError("mlp: upstream shape does not match output");
  }
  MlpGradients<Scalar> g;
  if (want_params) g.params = MlpParams<Scalar>::zeros_like(params);

  Matrix delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    const auto& a = l == 0 ? tape.input : tape.post[l - 1];
    if (want_params) {
      g.params.weights[l].noalias() = delta * a.transpose();
      g.params.biases[l] = delta.rowwise().sum();
    }
    Matrix back = params.weights[l].transpose() * delta;
    if (l == 0) {
      g.input = std::move(back);
    } else {
      delta = back.cwiseProduct(detail::elu_derivative(tape.pre[l - 1].array()).matrix());
    }
  }
  return g;
}

template <typename Scalar, typename DerivedIn, typename DerivedUp>
MlpGradients<Scalar> backward(const MlpParams<Scalar>& params, const MlpSpec& spec,
                              const Eigen::MatrixBase<DerivedIn>& input,
                              const Eigen::MatrixBase<DerivedUp>& upstream) {
  return backward(params, forward_tape(params, spec, input), upstream);
}

// tr(d output / d x_data) per column, from one reverse pass per output
// coordinate. Time inputs are excluded from the trace.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> input_jacobian_trace(const MlpParams<Scalar>& params,
                                                              const MlpSpec& spec,
                                                              const MlpTape<Scalar>& tape) {
  const int dim = spec.data_dim();
  if (spec.output_dim() != dim) {
    throw ShapeError("input_jacobian_trace: output dim " + std::to_string(spec.output_dim()) +
                     " differs from data dim " + std::to_string(dim));
  }
  const Eigen::Index n = tape.input.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> trace = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> basis(dim, n);
  for (int k = 0; k < dim; ++k) {
    basis.setZero();
    basis.row(k).setOnes();
    trace += backward(params, tape, basis, false).input.row(k).transpose();
  }
  return trace;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> input_jacobian_trace(const MlpParams<Scalar>& params,
                                                              const MlpSpec& spec,
                                                              const Eigen::MatrixBase<Derived>& input) {
  return input_jacobian_trace(params, spec, forward_tape(params, spec, input));
}

// Builds network inputs from data columns: [x; t; t] when time-conditioned.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> assemble_input(
    const MlpSpec& spec, const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& x,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& t) {
  if (spec.data_dim() != 2) throw ShapeError("assemble_input: spec is not two-dimensional");
  if (!spec.time_conditioned) return x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> in(4, x.cols());
  in.topRows(2) = x;
  in.row(2) = t.transpose();
  in.row(3) = t.transpose();
  return in;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> assemble_input(
    const MlpSpec& spec, const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& x, Scalar t) {
  return assemble_input(spec, x, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(x.cols(), t)));
}

}  // namespace psm
