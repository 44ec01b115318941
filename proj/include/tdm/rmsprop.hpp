#pragma once

#include <string>

#include "tdm/types.hpp"

namespace tdm {

// Plain (uncentered, no momentum) RMSprop over a flat parameter vector:
//   v <- decay * v + (1 - decay) * g^2
//   p <- p - lr * g / (sqrt(v) + eps)
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(Index size, double lr, double decay = 0.99, double eps = 1e-8, std::string name = "params");

  /// Throws NumericalError naming the group and index of a non-finite gradient.
  void step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads);

  const Vector& accumulators() const { return v_; }
  double lr() const { return lr_; }
  double decay() const { return decay_; }
  double eps() const { return eps_; }

 private:
  Vector v_;
  double lr_ = 1e-2;
  double decay_ = 0.99;
  double eps_ = 1e-8;
  std::string name_;
};

}  // namespace tdm
