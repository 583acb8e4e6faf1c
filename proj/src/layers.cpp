#include "leapt/layers.hpp"

#include <cmath>

namespace leapt {

Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix w(rows, cols);
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  return w;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init)
    : weight_(name + ".weight", zero_init ? Matrix::Zero(out, in) : glorot_uniform(out, in, rng)),
      bias_(name + ".bias", Matrix::Zero(out, 1)) {
  if (in < 0 || out < 0) throw ConfigError("Linear '" + name + "': negative dimension");
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  if (x.rows() != weight_.value.cols())
    throw ConfigError("Linear '" + weight_.name + "': expected input dim " + std::to_string(weight_.value.cols()) +
                      ", got " + std::to_string(x.rows()));
  return add_col(tape.param(weight_) * x, tape.param(bias_));
}

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::Tanh:
      return tanh(x);
    case Activation::Relu:
      return relu(x);
    case Activation::Identity:
      return x;
  }
  return x;
}

Mlp::Mlp(const std::string& name, MlpSpec spec, Rng& rng, bool zero_output) : spec_(std::move(spec)) {
  if (spec_.input_dim < 0 || spec_.output_dim < 0) throw ConfigError("Mlp '" + name + "': dims must be non-negative");
  int in = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    if (spec_.hidden[i] < 1) throw ConfigError("Mlp '" + name + "': hidden widths must be >= 1");
    layers_.emplace_back(name + ".l" + std::to_string(i), in, spec_.hidden[i], rng);
    in = spec_.hidden[i];
  }
  layers_.emplace_back(name + ".out", in, spec_.output_dim, rng, zero_output);
}

Var Mlp::operator()(Tape& tape, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = activate(layers_[i](tape, h), spec_.activation);
  return layers_.back()(tape, h);
}

void Mlp::collect(ParamList& out) {
  for (Linear& l : layers_) l.collect(out);
}

Vector forward(const Mlp& net, const Vector& input) {
  Tape tape(false);
  return net(tape, tape.constant(input)).value().col(0);
}

// ---- GRU ------------------------------------------------------------------

GruEncoder::GruEncoder(const std::string& name, int input_dim, int hidden_dim, Rng& rng)
    : hidden_(hidden_dim),
      w_(name + ".w", glorot_uniform(3 * hidden_dim, input_dim, rng)),
      u_(name + ".u", glorot_uniform(3 * hidden_dim, hidden_dim, rng)),
      bw_(name + ".bw", Matrix::Zero(3 * hidden_dim, 1)),
      bu_(name + ".bu", Matrix::Zero(3 * hidden_dim, 1)) {}

Var GruEncoder::step(Tape& tape, const Var& x, const Var& h) const {
  const Index H = hidden_;
  Var gx = add_col(tape.param(w_) * x, tape.param(bw_));
  Var gh = add_col(tape.param(u_) * h, tape.param(bu_));
  Var r = sigmoid(rows(gx, 0, H) + rows(gh, 0, H));
  Var z = sigmoid(rows(gx, H, H) + rows(gh, H, H));
  Var n = tanh(rows(gx, 2 * H, H) + hadamard(r, rows(gh, 2 * H, H)));
  return n + hadamard(z, h - n);
}

std::vector<Var> GruEncoder::encode(Tape& tape, const std::vector<Var>& inputs) const {
  std::vector<Var> out;
  if (inputs.empty()) return out;
  if (inputs.front().rows() != w_.value.cols())
    throw ConfigError("GruEncoder '" + w_.name + "': input dim mismatch");
  Var h = tape.constant(Matrix::Zero(hidden_, inputs.front().cols()));
  out.reserve(inputs.size());
  for (const Var& x : inputs) {
    h = step(tape, x, h);
    out.push_back(h);
  }
  return out;
}

void GruEncoder::collect(ParamList& out) {
  out.push_back(&w_);
  out.push_back(&u_);
  out.push_back(&bw_);
  out.push_back(&bu_);
}

// ---- attention --------------------------------------------------------------

AttentionEncoder::AttentionEncoder(const std::string& name, int input_dim, int model_dim, int heads, int max_len,
                                   Rng& rng)
    : model_dim_(model_dim),
      heads_(heads),
      max_len_(max_len),
      embed_(name + ".embed", input_dim, model_dim, rng),
      positions_(name + ".pos", 0.1 * glorot_uniform(model_dim, max_len, rng)),
      query_(name + ".q", model_dim, model_dim, rng),
      key_(name + ".k", model_dim, model_dim, rng),
      value_(name + ".v", model_dim, model_dim, rng),
      output_(name + ".o", model_dim, model_dim, rng),
      ff_in_(name + ".ff_in", model_dim, model_dim, rng),
      ff_out_(name + ".ff_out", model_dim, model_dim, rng) {
  if (heads < 1 || model_dim % heads != 0) throw ConfigError("AttentionEncoder: model_dim must be divisible by heads");
}

std::vector<Var> AttentionEncoder::encode(Tape& tape, const std::vector<Var>& inputs) const {
  std::vector<Var> out;
  if (inputs.empty()) return out;
  if (static_cast<int>(inputs.size()) > max_len_)
    throw ConfigError("AttentionEncoder: sequence longer than max_len " + std::to_string(max_len_));
  const Index dh = model_dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var pos = tape.param(positions_);

  std::vector<Var> e, q, k, v;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var et = add_col(embed_(tape, inputs[t]), col(pos, static_cast<Index>(t)));
    e.push_back(et);
    q.push_back(query_(tape, et));
    k.push_back(key_(tape, et));
    v.push_back(value_(tape, et));
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<Var> head_out;
    for (int hd = 0; hd < heads_; ++hd) {
      Var qh = rows(q[t], hd * dh, dh);
      std::vector<Var> scores;
      for (std::size_t s = 0; s <= t; ++s) scores.push_back(scale * col_sum(hadamard(qh, rows(k[s], hd * dh, dh))));
      Var w = softmax_cols(vcat(scores));  // (t+1) x B
      Var acc = scale_cols(rows(w, 0, 1), rows(v[0], hd * dh, dh));
      for (std::size_t s = 1; s <= t; ++s)
        acc = acc + scale_cols(rows(w, static_cast<Index>(s), 1), rows(v[s], hd * dh, dh));
      head_out.push_back(acc);
    }
    Var h1 = e[t] + output_(tape, vcat(head_out));
    out.push_back(h1 + ff_out_(tape, tanh(ff_in_(tape, h1))));
  }
  return out;
}

void AttentionEncoder::collect(ParamList& out) {
  embed_.collect(out);
  out.push_back(&positions_);
  query_.collect(out);
  key_.collect(out);
  value_.collect(out);
  output_.collect(out);
  ff_in_.collect(out);
  ff_out_.collect(out);
}

}  // namespace leapt
