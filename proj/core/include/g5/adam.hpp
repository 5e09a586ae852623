#pragma once

#include <cstdint>

#include "g5/tape.hpp"

namespace g5 {

// Per-parameter Adam accumulator with bias correction and coupled weight
// decay (decay * theta joins the raw gradient before the moment updates).
struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  static AdamState make(const Tensor& like, double learning_rate,
                        double weight_decay = 0.0);
};

// One update step; consumes and zeroes the parameter gradient.
void adam_step(Parameter& p, AdamState& s);

}  // namespace g5
