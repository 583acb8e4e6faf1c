// Dense feed-forward and sequence networks built on the autodiff tape.
#pragma once

#include "leapt/rng.hpp"
#include "leapt/tape.hpp"

#include <memory>
#include <string>
#include <vector>

namespace leapt {

enum class Activation { Tanh, Relu, Identity };

struct MlpSpec {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden;
  Activation activation = Activation::Tanh;
};

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int rows, int cols, Rng& rng);

class Linear {
 public:
  /// `zero_init` zeroes the weights as well as the bias.
  Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init = false);

  Var operator()(Tape& tape, const Var& x) const;
  int input_dim() const { return static_cast<int>(weight_.value.cols()); }
  int output_dim() const { return static_cast<int>(weight_.value.rows()); }
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
};

Var activate(const Var& x, Activation a);

class Mlp {
 public:
  Mlp(const std::string& name, MlpSpec spec, Rng& rng, bool zero_output = false);

  Var operator()(Tape& tape, const Var& x) const;
  const MlpSpec& spec() const { return spec_; }
  void collect(ParamList& out);
  std::vector<Linear>& layers() { return layers_; }

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
};

/// Evaluates an MLP on a single input vector.
Vector forward(const Mlp& net, const Vector& input);

/// Causal sequence encoder: output t depends on inputs 0..t only.
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual std::vector<Var> encode(Tape& tape, const std::vector<Var>& inputs) const = 0;
  virtual int output_dim() const = 0;
  virtual void collect(ParamList& out) = 0;
};

/// Gated recurrent cell (reset gate applied to the recurrent candidate term).
class GruEncoder final : public SequenceEncoder {
 public:
  GruEncoder(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  Var step(Tape& tape, const Var& x, const Var& h) const;
  std::vector<Var> encode(Tape& tape, const std::vector<Var>& inputs) const override;
  int output_dim() const override { return hidden_; }
  void collect(ParamList& out) override;

 private:
  int hidden_;
  Param w_;   // 3H x in   (reset, update, candidate)
  Param u_;   // 3H x H
  Param bw_;  // 3H x 1
  Param bu_;  // 3H x 1
};

/// One causal self-attention layer with learned positions and a tanh
/// feed-forward block, both residual.
class AttentionEncoder final : public SequenceEncoder {
 public:
  AttentionEncoder(const std::string& name, int input_dim, int model_dim, int heads, int max_len, Rng& rng);

  std::vector<Var> encode(Tape& tape, const std::vector<Var>& inputs) const override;
  int output_dim() const override { return model_dim_; }
  void collect(ParamList& out) override;

 private:
  int model_dim_;
  int heads_;
  int max_len_;
  Linear embed_;
  Param positions_;  // model_dim x max_len
  Linear query_, key_, value_, output_;
  Linear ff_in_, ff_out_;
};

}  // namespace leapt
