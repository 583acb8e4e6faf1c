#include "leapt/distributions.hpp"

#include <sstream>

namespace leapt {

CategoricalDist::CategoricalDist(Vector p) : probs(std::move(p)) {
  if (probs.size() == 0) throw ConfigError("CategoricalDist: empty support");
  if ((probs.array() < 0.0).any() || !probs.allFinite()) throw ConfigError("CategoricalDist: invalid probability");
  if (std::abs(probs.sum() - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "CategoricalDist: probabilities sum to " << probs.sum();
    throw ConfigError(os.str());
  }
}

double CategoricalDist::entropy() const {
  double h = 0.0;
  for (Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return h;
}

BernoulliDist::BernoulliDist(double p) : p_left(p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("BernoulliDist: p outside [0, 1]");
}

CategoricalDist BernoulliDist::as_categorical() const {
  Vector v(2);
  v << p_left, 1.0 - p_left;
  return CategoricalDist(v);
}

double kl(const CategoricalDist& q, const CategoricalDist& p) {
  if (q.size() != p.size()) throw ConfigError("kl: categorical support mismatch");
  double out = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    if (q.probs[i] == 0.0) continue;
    if (p.probs[i] == 0.0) throw InfiniteDivergence("kl: q has mass in cell " + std::to_string(i) + " where p is zero");
    out += q.probs[i] * std::log(q.probs[i] / p.probs[i]);
  }
  return std::max(out, 0.0);
}

// ---- graph-level ----------------------------------------------------------

GaussianVar gaussian_from_head(const Var& head, Index dim) {
  if (head.rows() != 2 * dim) throw ConfigError("gaussian_from_head: head must have 2*dim rows");
  return {rows(head, 0, dim), clamp(rows(head, dim, dim), kMinLogVar, kMaxLogVar)};
}

GaussianVar standard_gaussian(Tape& tape, Index dim, Index cols) {
  return {tape.constant(Matrix::Zero(dim, cols)), tape.constant(Matrix::Zero(dim, cols))};
}

GaussianVar fixed_variance(const Var& mean, double log_var) {
  return {mean, mean.tape()->constant(Matrix::Constant(mean.rows(), mean.cols(), log_var))};
}

Var rsample(const GaussianVar& d, const Matrix& noise) {
  if (noise.rows() != d.mean.rows() || noise.cols() != d.mean.cols()) throw ConfigError("rsample: noise shape mismatch");
  Matrix sd = (0.5 * d.log_var.value().array()).exp().matrix();
  Matrix out = d.mean.value() + sd.cwiseProduct(noise);
  Var m = d.mean, lv = d.log_var;
  return m.tape()->push(std::move(out), {m, lv}, [m, lv, sd, noise](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(m, g);
    if (t.needs_grad(lv)) t.accumulate(lv, (0.5 * g.array() * sd.array() * noise.array()).matrix());
  }, "rsample");
}

Var log_prob(const GaussianVar& d, const Var& x) {
  const Matrix& mean = d.mean.value();
  const Matrix& lv = d.log_var.value();
  if (x.rows() != mean.rows() || x.cols() != mean.cols()) throw ConfigError("log_prob: shape mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Matrix inv_var = (-lv.array()).exp().matrix();
  Matrix diff = x.value() - mean;
  Matrix per = -0.5 * (log2pi + lv.array() + diff.array().square() * inv_var.array()).matrix();
  Matrix out = per.colwise().sum();
  Var m = d.mean, l = d.log_var, xv = x;
  return x.tape()->push(std::move(out), {m, l, xv}, [m, l, xv, inv_var, diff](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gb = g.replicate(diff.rows(), 1);
    Matrix dm = gb.cwiseProduct(diff.cwiseProduct(inv_var));
    if (t.needs_grad(m)) t.accumulate(m, dm);
    if (t.needs_grad(xv)) t.accumulate(xv, -dm);
    if (t.needs_grad(l))
      t.accumulate(l, (gb.array() * (-0.5 + 0.5 * diff.array().square() * inv_var.array())).matrix());
  }, "gaussian_log_prob");
}

Var kl(const GaussianVar& q, const GaussianVar& p) {
  const Matrix& mq = q.mean.value();
  const Matrix& mp = p.mean.value();
  if (mq.rows() != mp.rows() || mq.cols() != mp.cols()) throw ConfigError("kl: shape mismatch");
  const Matrix& lq = q.log_var.value();
  const Matrix& lp = p.log_var.value();
  Matrix vq = lq.array().exp().matrix();
  Matrix inv_vp = (-lp.array()).exp().matrix();
  Matrix diff = mq - mp;
  Matrix per = 0.5 * (lp.array() - lq.array() + (vq.array() + diff.array().square()) * inv_vp.array() - 1.0).matrix();
  Matrix out = per.colwise().sum();
  Var a = q.mean, b = q.log_var, c = p.mean, d = p.log_var;
  return a.tape()->push(std::move(out), {a, b, c, d}, [a, b, c, d, vq, inv_vp, diff](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gb = g.replicate(diff.rows(), 1);
    Matrix dmean = gb.cwiseProduct(diff.cwiseProduct(inv_vp));
    if (t.needs_grad(a)) t.accumulate(a, dmean);
    if (t.needs_grad(c)) t.accumulate(c, -dmean);
    if (t.needs_grad(b)) t.accumulate(b, (gb.array() * 0.5 * (vq.array() * inv_vp.array() - 1.0)).matrix());
    if (t.needs_grad(d))
      t.accumulate(d, (gb.array() * 0.5 * (1.0 - (vq.array() + diff.array().square()) * inv_vp.array())).matrix());
  }, "gaussian_kl");
}

}  // namespace leapt
