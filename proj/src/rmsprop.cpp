#include "tdm/rmsprop.hpp"

#include <cmath>

#include "tdm/error.hpp"

namespace tdm {

RmsProp::RmsProp(Index size, double lr, double decay, double eps, std::string name)
    : v_(Vector::Zero(size)), lr_(lr), decay_(decay), eps_(eps), name_(std::move(name)) {
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw UsageError("RMSprop decay must lie in (0, 1)");
  if (!(eps > 0.0)) throw UsageError("RMSprop eps must be positive");
}

void RmsProp::step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads) {
  if (params.size() != v_.size() || grads.size() != v_.size()) {
    throw DataError("RMSprop: parameter group '" + name_ + "' has the wrong size");
  }
  for (Index k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads(k))) {
      throw NumericalError("non-finite gradient in '" + name_ + "' at index " + std::to_string(k));
    }
  }
  v_.array() = decay_ * v_.array() + (1.0 - decay_) * grads.array().square();
  params.array() -= lr_ * grads.array() / (v_.array().sqrt() + eps_);
}

}  // namespace tdm
