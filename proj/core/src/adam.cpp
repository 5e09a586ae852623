#include "g5/adam.hpp"

#include <cmath>

namespace g5 {

AdamState AdamState::make(const Tensor& like, double learning_rate,
                          double weight_decay) {
  AdamState s;
  s.m = Tensor::zeros(like.shape);
  s.v = Tensor::zeros(like.shape);
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  return s;
}

void adam_step(Parameter& p, AdamState& s) {
  if (p.value.grad.size() != p.value.data.size())
    throw ContractError("adam_step: parameter '" + p.name +
                        "' has no gradient buffer");
  if (!p.value.same_shape(s.m))
    throw ShapeError("adam_step: state shape mismatch for '" + p.name + "'");
  s.t += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < p.value.data.size(); ++i) {
    const double g = p.value.grad[i] + s.weight_decay * p.value.data[i];
    if (!std::isfinite(g))
      throw NumericError("adam_step: non-finite gradient for '" + p.name +
                         "'");
    s.m.data[i] = s.beta1 * s.m.data[i] + (1.0 - s.beta1) * g;
    s.v.data[i] = s.beta2 * s.v.data[i] + (1.0 - s.beta2) * g * g;
    if (s.learning_rate != 0.0) {
      const double mhat = s.m.data[i] / bc1;
      const double vhat = s.v.data[i] / bc2;
      p.value.data[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
    }
  }
  p.zero_grad();
}

}  // namespace g5
