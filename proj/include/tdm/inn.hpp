#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "tdm/random.hpp"
#include "tdm/types.hpp"

namespace tdm {

inline constexpr double kDefaultClamp = 1.9;

// SELU with the standard self-normalizing constants.
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;

template <typename Scalar>
Scalar selu(Scalar x) {
  return x > Scalar(0) ? Scalar(kSeluLambda) * x : Scalar(kSeluLambda * kSeluAlpha) * std::expm1(x);
}

template <typename Scalar>
Scalar selu_derivative(Scalar x) {
  return x > Scalar(0) ? Scalar(kSeluLambda) : Scalar(kSeluLambda * kSeluAlpha) * std::exp(x);
}

/// Soft clamp of a log-scale: c * (2/pi) * atan(u / c). Odd, bounded by c.
template <typename Scalar>
Scalar clamp_scale(Scalar u, Scalar c) {
  return c * Scalar(2.0 * std::numbers::inv_pi) * std::atan(u / c);
}

template <typename Scalar>
Scalar clamp_scale_derivative(Scalar u, Scalar c) {
  const Scalar r = u / c;
  return Scalar(2.0 * std::numbers::inv_pi) / (Scalar(1) + r * r);
}

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

// Fully connected net: SELU after every layer but the last.
struct Mlp {
  std::vector<DenseLayer> layers;

  Index in_dim() const { return layers.front().weight.cols(); }
  Index out_dim() const { return layers.back().weight.rows(); }
  Index param_count() const;
};

struct MlpCache {
  std::vector<Matrix> inputs;        // input to each layer
  std::vector<Matrix> preactivation; // output of each layer before SELU
};

Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpCache* cache = nullptr);
/// Accumulates parameter gradients into `grad`; returns the input gradient.
Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& d_out, Mlp& grad);

/// One affine coupling block acting on rows y = [y_a | y_b], |y_a| = split:
///   y_a' = y_a * exp(clamp(g1(y_b))) + h1(y_b)
///   y_b' = y_b * exp(clamp(g2(y_a'))) + h2(y_a')
struct CouplingBlock {
  Mlp g1, h1, g2, h2;
  Index dim = 0;
  Index split = 0;  // floor(dim / 2)
  double clamp = kDefaultClamp;
};

struct TransformStack {
  std::vector<CouplingBlock> blocks;
  Index dim = 0;
  Index width_multiplier = 0;  // hidden width = width_multiplier * dim
  double clamp = kDefaultClamp;

  Index depth() const { return static_cast<Index>(blocks.size()); }
  Index param_count() const;
};

struct BlockCache {
  Matrix input;
  Matrix u1, s1;  // raw and clamped log-scales of the first layer
  Matrix y1;      // updated first half
  Matrix u2, s2;
  MlpCache g1, h1, g2, h2;
};

using StackCache = std::vector<BlockCache>;

/// Hidden layers fan-in scaled uniform; every subnet's output layer is zero,
/// so a fresh stack is exactly the identity.
TransformStack init_stack(Index dim, Index depth, Index width_multiplier, Rng& rng,
                          double clamp = kDefaultClamp);

/// Same architecture, all parameters zero. Used as a gradient accumulator.
TransformStack zeros_like(const TransformStack& stack);

Matrix block_forward(const CouplingBlock& block, const Matrix& y_in, BlockCache* cache = nullptr);
Matrix block_inverse(const CouplingBlock& block, const Matrix& y_out);
Matrix block_backward(const CouplingBlock& block, const BlockCache& cache, const Matrix& d_out,
                      CouplingBlock& grad);

// The two halves of a block on their own; used for Jacobian inspection.
Matrix first_coupling_forward(const CouplingBlock& block, const Matrix& y_in);
Matrix second_coupling_forward(const CouplingBlock& block, const Matrix& z);

Matrix stack_forward(const TransformStack& stack, const Matrix& x, StackCache* cache = nullptr);
Matrix stack_inverse(const TransformStack& stack, const Matrix& z);
/// Reverse mode through the whole stack. Parameter gradients are added to
/// `grad` (which must have the stack's shape); returns dL/dX.
Matrix stack_backward(const TransformStack& stack, const StackCache& cache, const Matrix& d_z,
                      TransformStack& grad);

/// f_1(X), f_{1:2}(X), ..., f_{1:T}(X).
std::vector<Matrix> stack_views(const TransformStack& stack, const Matrix& x);

/// Flat parameter vector in a fixed traversal order (block, g1 h1 g2 h2,
/// layer, weight row-major then bias).
Vector pack_parameters(const TransformStack& stack);
void unpack_parameters(const Vector& flat, TransformStack& stack);

nlohmann::json stack_to_json(const TransformStack& stack);
TransformStack stack_from_json(const nlohmann::json& j);

}  // namespace tdm
