#include "leapt/optimizer.hpp"

#include <cmath>

namespace leapt {

Adam::Adam(ParamList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
  double sq = 0.0;
  for (const Param* p : params_) {
    if (!p->grad.allFinite()) throw NumericalError("non-finite gradient in parameter '" + p->name + "'");
    sq += p->grad.squaredNorm();
  }
  last_norm_ = std::sqrt(sq);
  double clip = 1.0;
  if (config_.clip_norm > 0.0 && last_norm_ > config_.clip_norm) clip = config_.clip_norm / last_norm_;

  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    Matrix g = clip * p.grad;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.value.array() -= config_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
    p.zero_grad();
  }
}

}  // namespace leapt
