#pragma once

#include "leapt/tape.hpp"

#include <vector>

namespace leapt {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 10.0;
};

/// Adaptive-moment optimizer with bias correction and global-norm clipping.
class Adam {
 public:
  Adam(ParamList params, AdamConfig config);

  /// Applies one update from the accumulated gradients, then zeroes them.
  /// Throws NumericalError (naming the parameter) and leaves every parameter
  /// untouched if any gradient is non-finite.
  void step();
  void zero_grad();

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  /// Global L2 norm of the gradients before clipping, from the last step.
  double last_grad_norm() const { return last_norm_; }

 private:
  ParamList params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long steps_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace leapt
