#include "leapt/worldmodel.hpp"

namespace leapt {

namespace {

std::vector<Mlp> make_decoders(const std::string& prefix, const std::vector<Modality>& ms, int input_dim, int hidden,
                               Rng& rng) {
  std::vector<Mlp> out;
  for (const auto& m : ms) out.emplace_back(prefix + "." + m.name, MlpSpec{input_dim, m.dim, {hidden}, Activation::Tanh}, rng);
  return out;
}

Var decode_all(Tape& tape, const std::vector<Mlp>& decoders, const Var& input) {
  std::vector<Var> parts;
  for (const Mlp& d : decoders) parts.push_back(d(tape, input));
  return vcat(parts);
}

}  // namespace

BaselineModel::BaselineModel(ModelConfig config, std::uint64_t seed) : WorldModel(std::move(config)) {
  config_.validate();
  if (is_leapt(config_.kind)) throw ConfigError("BaselineModel: kind must be baseline-s or baseline-d");
  const auto& c = config_;
  Rng rng = derive_rng(seed, 0xba5e);
  enc_ = std::make_unique<GruEncoder>("enc", c.ego_dim() + c.task_dim(), c.hidden, rng);
  z_head_ = std::make_unique<Linear>("q_z", c.hidden, 2 * c.z_dim, rng, true);
  f_ = std::make_unique<Mlp>("f", MlpSpec{c.z_dim + c.action_dim, 2 * c.z_dim, {c.hidden}, Activation::Tanh}, rng, true);
  dec_x_ = make_decoders("dec_x", c.ego, c.z_dim, c.hidden, rng);
  dec_y_ = make_decoders("dec_y", c.task, c.z_dim, c.hidden, rng);
}

void BaselineModel::collect(ParamList& out) {
  enc_->collect(out);
  z_head_->collect(out);
  f_->collect(out);
  for (Mlp& d : dec_x_) d.collect(out);
  for (Mlp& d : dec_y_) d.collect(out);
}

std::vector<GaussianVar> BaselineModel::posteriors(Tape& tape, const std::vector<Matrix>& inputs) const {
  std::vector<Var> in;
  for (const Matrix& m : inputs) in.push_back(tape.constant(m));
  std::vector<GaussianVar> out;
  for (const Var& e : enc_->encode(tape, in)) out.push_back(gaussian_from_head((*z_head_)(tape, e), config_.z_dim));
  return out;
}

Var BaselineModel::decode_x(Tape& tape, const Var& z) const { return decode_all(tape, dec_x_, z); }
Var BaselineModel::decode_y(Tape& tape, const Var& z) const { return decode_all(tape, dec_y_, z); }

LossTerms BaselineModel::loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout) const {
  return loss(tape, batch, noise, dropout, config_.dropout_prob);
}

LossTerms BaselineModel::loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout,
                              double dropout_prob) const {
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw ConfigError("elbo_baseline: dropout_prob must be in [0, 1]");
  const int T = batch.length();
  const Index B = batch.batch();
  if (T < 1 || B < 1) throw ConfigError("elbo_baseline: empty batch");
  const auto& c = config_;
  const double obs_log_var = 2.0 * std::log(c.obs_std);

  // One keep/drop decision per trajectory, shared by all steps.
  Eigen::RowVectorXd keep(B);
  for (Index j = 0; j < B; ++j) keep[j] = uniform(dropout) < dropout_prob ? 0.0 : 1.0;
  last_input_.clear();
  for (int t = 0; t < T; ++t) {
    Matrix in(c.ego_dim() + c.task_dim(), B);
    in << batch.x[t], (batch.y[t].array().rowwise() * keep.array()).matrix();
    last_input_.push_back(std::move(in));
  }
  std::vector<GaussianVar> q = posteriors(tape, last_input_);

  LossTerms terms;
  Var objective = tape.constant(Matrix::Zero(1, B));
  Var z_prev;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (int t = 0; t < T; ++t) {
    Var z, reg;
    if (stochastic()) {
      GaussianVar p = t == 0 ? standard_gaussian(tape, c.z_dim, B)
                             : gaussian_from_head((*f_)(tape, vcat({z_prev, tape.constant(batch.a[t - 1])})), c.z_dim);
      z = rsample(q[t], standard_normal(c.z_dim, B, noise));
      reg = kl(q[t], p);
    } else {
      z = q[t].mean;
      Var predicted = t == 0 ? tape.constant(Matrix::Zero(c.z_dim, B))
                             : rows((*f_)(tape, vcat({z_prev, tape.constant(batch.a[t - 1])})), 0, c.z_dim);
      reg = c.consistency_weight * col_sum(square(z - predicted));
    }
    Var lx = log_prob(fixed_variance(decode_x(tape, z), obs_log_var), tape.constant(batch.x[t]));
    Var ly = log_prob(fixed_variance(decode_y(tape, z), obs_log_var), tape.constant(batch.y[t]));
    objective = objective + lx + ly - reg;

    double rx = -lx.value().sum() * inv_b, ry = -ly.value().sum() * inv_b, rg = reg.value().sum() * inv_b;
    for (auto [v, name] : {std::pair{rx, "recon_x"}, std::pair{ry, "recon_y"}, std::pair{rg, "kl_s"}})
      if (!std::isfinite(v))
        throw NumericalError(std::string("loss term ") + name + " is non-finite at step " + std::to_string(t + 1));
    terms.recon_x += rx;
    terms.recon_y += ry;
    terms.kl_s += rg;
    terms.kl_s_steps.push_back(rg);
    terms.kl_h_steps.push_back(0.0);
    z_prev = z;
  }
  terms.total = -inv_b * sum(objective);
  return terms;
}

std::vector<BeliefEnsemble> BaselineModel::rollout_beliefs(const std::vector<Matrix>& x, const std::vector<Matrix>&,
                                                           Rng& rng) const {
  if (x.empty()) throw ConfigError("rollout_beliefs: empty history");
  const auto& c = config_;
  const Index N = x.front().cols();
  std::vector<Matrix> inputs;
  for (const Matrix& m : x) {
    Matrix in = Matrix::Zero(c.ego_dim() + c.task_dim(), N);
    in.topRows(c.ego_dim()) = m;
    inputs.push_back(std::move(in));
  }
  Tape tape(false);
  std::vector<GaussianVar> q = posteriors(tape, inputs);
  std::vector<BeliefEnsemble> out;
  for (const GaussianVar& qt : q) {
    Var z = stochastic() ? rsample(qt, standard_normal(c.z_dim, N, rng)) : qt.mean;
    out.push_back({z.value(), decode_y(tape, z).value()});
  }
  return out;
}

}  // namespace leapt
