#include "tdm/inn.hpp"

#include <string>

#include "tdm/error.hpp"

namespace tdm {

namespace {

Matrix apply_selu(const Matrix& x) {
  return (kSeluLambda * x.array().max(0.0) + (kSeluLambda * kSeluAlpha) * (x.array().min(0.0).exp() - 1.0)).matrix();
}

Matrix clamped(const Matrix& u, double c) {
  return u.unaryExpr([c](double v) { return clamp_scale(v, c); });
}

Matrix clamp_grad(const Matrix& u, double c) {
  return u.unaryExpr([c](double v) { return clamp_scale_derivative(v, c); });
}

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) {
    throw NumericalError(std::string("non-finite values in ") + where +
                         " (max |entry| " + std::to_string(m.cwiseAbs().maxCoeff()) + ")");
  }
}

Mlp make_mlp(Index in, Index hidden, Index out, Rng& rng) {
  Mlp net;
  const Index dims[] = {in, hidden, hidden, hidden, out};
  for (int l = 0; l < 4; ++l) {
    DenseLayer layer{Matrix::Zero(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1])};
    if (l < 3) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Index r = 0; r < layer.weight.rows(); ++r)
        for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
      for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Mlp zero_mlp(const Mlp& like) {
  Mlp net;
  for (const auto& layer : like.layers) {
    net.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                          Vector::Zero(layer.bias.size())});
  }
  return net;
}

template <typename Stack, typename F>
void for_each_layer(Stack& stack, F&& fn) {
  for (auto& block : stack.blocks) {
    for (auto* net : {&block.g1, &block.h1, &block.g2, &block.h2}) {
      for (auto& layer : net->layers) fn(layer);
    }
  }
}

void check_shape(const CouplingBlock& block, const Matrix& y) {
  if (y.cols() != block.dim) throw DataError("coupling block: input has wrong dimension");
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    std::vector<double> w(static_cast<std::size_t>(layer.weight.size()));
    Eigen::Map<MatrixX<double>>(w.data(), layer.weight.cols(), layer.weight.rows()) = layer.weight.transpose();
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weight_shape", {layer.weight.rows(), layer.weight.cols()}},
                      {"weight", w},
                      {"bias", b}});
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& lj : j) {
    const Index rows = lj.at("weight_shape").at(0).get<Index>();
    const Index cols = lj.at("weight_shape").at(1).get<Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Index>(w.size()) != rows * cols || static_cast<Index>(b.size()) != rows) {
      throw DataError("checkpoint layer has inconsistent sizes");
    }
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    layer.weight = Eigen::Map<const MatrixX<double>>(w.data(), cols, rows).transpose();
    layer.bias = Eigen::Map<const Vector>(b.data(), rows);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace

Index Mlp::param_count() const {
  Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Index TransformStack::param_count() const {
  Index n = 0;
  for (const auto& b : blocks) n += b.g1.param_count() + b.h1.param_count() + b.g2.param_count() + b.h2.param_count();
  return n;
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->preactivation.clear();
    cache->inputs.reserve(net.layers.size());
    cache->preactivation.reserve(net.layers.size());
  }
  Matrix a = x;
  const std::size_t last = net.layers.size() - 1;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Matrix pre(a.rows(), layer.weight.rows());
    pre.noalias() = a * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->preactivation.push_back(pre);
    }
    a = l == last ? std::move(pre) : apply_selu(pre);
  }
  return a;
}

Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& d_out, Mlp& grad) {
  Matrix d = d_out;
  const std::size_t last = net.layers.size() - 1;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (l != last) {
      // selu'(v) = selu(v) + lambda * alpha for v <= 0; reuses the cached activation.
      d.array() *= (cache.preactivation[l].array() > 0.0)
                       .select(kSeluLambda, cache.inputs[l + 1].array() + kSeluLambda * kSeluAlpha);
    }
    grad.layers[l].weight.noalias() += d.transpose() * cache.inputs[l];
    grad.layers[l].bias += d.colwise().sum().transpose();
    d = d * net.layers[l].weight;
  }
  return d;
}

TransformStack init_stack(Index dim, Index depth, Index width_multiplier, Rng& rng, double clamp) {
  if (dim < 2) throw UsageError("the coupling transform needs at least two features");
  if (depth < 1 || width_multiplier < 1) throw UsageError("T and K must be at least 1");
  if (!(clamp > 0.0)) throw UsageError("clamp constant must be positive");
  TransformStack stack;
  stack.dim = dim;
  stack.width_multiplier = width_multiplier;
  stack.clamp = clamp;
  const Index split = dim / 2;
  const Index rest = dim - split;
  const Index hidden = width_multiplier * dim;
  for (Index t = 0; t < depth; ++t) {
    CouplingBlock block;
    block.dim = dim;
    block.split = split;
    block.clamp = clamp;
    block.g1 = make_mlp(rest, hidden, split, rng);
    block.h1 = make_mlp(rest, hidden, split, rng);
    block.g2 = make_mlp(split, hidden, rest, rng);
    block.h2 = make_mlp(split, hidden, rest, rng);
    stack.blocks.push_back(std::move(block));
  }
  return stack;
}

TransformStack zeros_like(const TransformStack& stack) {
  TransformStack out = stack;
  for (auto& block : out.blocks) {
    block.g1 = zero_mlp(block.g1);
    block.h1 = zero_mlp(block.h1);
    block.g2 = zero_mlp(block.g2);
    block.h2 = zero_mlp(block.h2);
  }
  return out;
}

Matrix block_forward(const CouplingBlock& block, const Matrix& y_in, BlockCache* cache) {
  check_shape(block, y_in);
  const Index rest = block.dim - block.split;
  const Matrix xa = y_in.leftCols(block.split);
  const Matrix xb = y_in.rightCols(rest);

  Matrix u1 = mlp_forward(block.g1, xb, cache ? &cache->g1 : nullptr);
  Matrix s1 = clamped(u1, block.clamp);
  const Matrix t1 = mlp_forward(block.h1, xb, cache ? &cache->h1 : nullptr);
  Matrix y1 = (xa.array() * s1.array().exp()).matrix() + t1;

  Matrix u2 = mlp_forward(block.g2, y1, cache ? &cache->g2 : nullptr);
  Matrix s2 = clamped(u2, block.clamp);
  const Matrix t2 = mlp_forward(block.h2, y1, cache ? &cache->h2 : nullptr);

  Matrix out(y_in.rows(), block.dim);
  out.leftCols(block.split) = y1;
  out.rightCols(rest) = (xb.array() * s2.array().exp()).matrix() + t2;
  require_finite(out, "coupling block output");

  if (cache) {
    cache->input = y_in;
    cache->u1 = std::move(u1);
    cache->s1 = std::move(s1);
    cache->y1 = std::move(y1);
    cache->u2 = std::move(u2);
    cache->s2 = std::move(s2);
  }
  return out;
}

Matrix block_inverse(const CouplingBlock& block, const Matrix& y_out) {
  check_shape(block, y_out);
  const Index rest = block.dim - block.split;
  const Matrix y1 = y_out.leftCols(block.split);
  const Matrix y2 = y_out.rightCols(rest);

  const Matrix s2 = clamped(mlp_forward(block.g2, y1), block.clamp);
  const Matrix xb = ((y2 - mlp_forward(block.h2, y1)).array() * (-s2.array()).exp()).matrix();
  const Matrix s1 = clamped(mlp_forward(block.g1, xb), block.clamp);
  const Matrix xa = ((y1 - mlp_forward(block.h1, xb)).array() * (-s1.array()).exp()).matrix();

  Matrix out(y_out.rows(), block.dim);
  out.leftCols(block.split) = xa;
  out.rightCols(rest) = xb;
  require_finite(out, "coupling block inverse");
  return out;
}

Matrix block_backward(const CouplingBlock& block, const BlockCache& cache, const Matrix& d_out,
                      CouplingBlock& grad) {
  const Index rest = block.dim - block.split;
  const Matrix xa = cache.input.leftCols(block.split);
  const Matrix xb = cache.input.rightCols(rest);
  Matrix dy1 = d_out.leftCols(block.split);
  const Matrix dy2 = d_out.rightCols(rest);

  const Eigen::ArrayXXd e2 = cache.s2.array().exp();
  Matrix dxb = (dy2.array() * e2).matrix();
  const Matrix du2 = (dy2.array() * xb.array() * e2 * clamp_grad(cache.u2, block.clamp).array()).matrix();
  dy1 += mlp_backward(block.g2, cache.g2, du2, grad.g2);
  dy1 += mlp_backward(block.h2, cache.h2, dy2, grad.h2);

  const Eigen::ArrayXXd e1 = cache.s1.array().exp();
  const Matrix dxa = (dy1.array() * e1).matrix();
  const Matrix du1 = (dy1.array() * xa.array() * e1 * clamp_grad(cache.u1, block.clamp).array()).matrix();
  dxb += mlp_backward(block.g1, cache.g1, du1, grad.g1);
  dxb += mlp_backward(block.h1, cache.h1, dy1, grad.h1);

  Matrix d_in(d_out.rows(), block.dim);
  d_in.leftCols(block.split) = dxa;
  d_in.rightCols(rest) = dxb;
  return d_in;
}

Matrix first_coupling_forward(const CouplingBlock& block, const Matrix& y_in) {
  check_shape(block, y_in);
  const Index rest = block.dim - block.split;
  const Matrix xb = y_in.rightCols(rest);
  const Matrix s1 = clamped(mlp_forward(block.g1, xb), block.clamp);
  Matrix out = y_in;
  out.leftCols(block.split) =
      (y_in.leftCols(block.split).array() * s1.array().exp()).matrix() + mlp_forward(block.h1, xb);
  return out;
}

Matrix second_coupling_forward(const CouplingBlock& block, const Matrix& z) {
  check_shape(block, z);
  const Index rest = block.dim - block.split;
  const Matrix za = z.leftCols(block.split);
  const Matrix s2 = clamped(mlp_forward(block.g2, za), block.clamp);
  Matrix out = z;
  out.rightCols(rest) = (z.rightCols(rest).array() * s2.array().exp()).matrix() + mlp_forward(block.h2, za);
  return out;
}

Matrix stack_forward(const TransformStack& stack, const Matrix& x, StackCache* cache) {
  if (x.cols() != stack.dim) throw DataError("transform: input has wrong dimension");
  if (cache) cache->assign(stack.blocks.size(), BlockCache{});
  Matrix z = x;
  for (std::size_t t = 0; t < stack.blocks.size(); ++t) {
    z = block_forward(stack.blocks[t], z, cache ? &(*cache)[t] : nullptr);
  }
  return z;
}

Matrix stack_inverse(const TransformStack& stack, const Matrix& z) {
  if (z.cols() != stack.dim) throw DataError("transform: input has wrong dimension");
  Matrix x = z;
  for (std::size_t t = stack.blocks.size(); t-- > 0;) x = block_inverse(stack.blocks[t], x);
  return x;
}

Matrix stack_backward(const TransformStack& stack, const StackCache& cache, const Matrix& d_z,
                      TransformStack& grad) {
  if (cache.size() != stack.blocks.size() || grad.blocks.size() != stack.blocks.size()) {
    throw DataError("stack_backward: cache or gradient does not match the stack");
  }
  Matrix d = d_z;
  for (std::size_t t = stack.blocks.size(); t-- > 0;) {
    d = block_backward(stack.blocks[t], cache[t], d, grad.blocks[t]);
  }
  return d;
}

std::vector<Matrix> stack_views(const TransformStack& stack, const Matrix& x) {
  std::vector<Matrix> views;
  Matrix z = x;
  for (const auto& block : stack.blocks) {
    z = block_forward(block, z);
    views.push_back(z);
  }
  return views;
}

Vector pack_parameters(const TransformStack& stack) {
  Vector flat(stack.param_count());
  Index k = 0;
  for_each_layer(stack, [&](const DenseLayer& layer) {
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) flat(k++) = layer.weight(r, c);
    for (Index r = 0; r < layer.bias.size(); ++r) flat(k++) = layer.bias(r);
  });
  return flat;
}

void unpack_parameters(const Vector& flat, TransformStack& stack) {
  if (flat.size() != stack.param_count()) throw DataError("parameter vector has wrong length");
  Index k = 0;
  for_each_layer(stack, [&](DenseLayer& layer) {
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat(k++);
    for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = flat(k++);
  });
}

nlohmann::json stack_to_json(const TransformStack& stack) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : stack.blocks) {
    blocks.push_back({{"g1", mlp_to_json(b.g1)},
                      {"h1", mlp_to_json(b.h1)},
                      {"g2", mlp_to_json(b.g2)},
                      {"h2", mlp_to_json(b.h2)}});
  }
  return {{"dim", stack.dim},
          {"depth", stack.depth()},
          {"width_multiplier", stack.width_multiplier},
          {"clamp", stack.clamp},
          {"blocks", blocks}};
}

TransformStack stack_from_json(const nlohmann::json& j) {
  TransformStack stack;
  stack.dim = j.at("dim").get<Index>();
  stack.width_multiplier = j.at("width_multiplier").get<Index>();
  stack.clamp = j.at("clamp").get<double>();
  for (const auto& bj : j.at("blocks")) {
    CouplingBlock b;
    b.dim = stack.dim;
    b.split = stack.dim / 2;
    b.clamp = stack.clamp;
    b.g1 = mlp_from_json(bj.at("g1"));
    b.h1 = mlp_from_json(bj.at("h1"));
    b.g2 = mlp_from_json(bj.at("g2"));
    b.h2 = mlp_from_json(bj.at("h2"));
    stack.blocks.push_back(std::move(b));
  }
  if (stack.depth() != j.at("depth").get<Index>()) throw DataError("checkpoint depth mismatch");
  return stack;
}

}  // namespace tdm
