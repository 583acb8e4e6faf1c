// Latent state-space world models: the decomposed model (ego latent s,
// hidden latent h) and the single-latent baselines, their training losses,
// and test-time belief roll-outs.
#pragma once

#include "leapt/checkpoint.hpp"
#include "leapt/distributions.hpp"
#include "leapt/envs.hpp"
#include "leapt/layers.hpp"
#include "leapt/optimizer.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace leapt {

enum class ModelKind { Leapt, LeaptAttn, BaselineS, BaselineD };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
inline bool is_leapt(ModelKind k) { return k == ModelKind::Leapt || k == ModelKind::LeaptAttn; }

struct ModelConfig {
  ModelKind kind = ModelKind::Leapt;
  std::string domain;
  std::vector<Modality> ego;
  std::vector<Modality> task;
  int action_dim = 1;
  int s_dim = 8;
  int h_dim = 8;
  int z_dim = 16;
  int hidden = 32;
  int attn_heads = 2;
  int max_len = 10;
  double obs_std = 0.1;
  double dropout_prob = 0.5;
  double consistency_weight = 1.0;
  /// Weight of the KL between the h posterior and the transition applied to
  /// h sampled by the test-time prior chain; 0 trains the plain ELBO.
  double chain_weight = 1.0;

  int ego_dim() const;
  int task_dim() const;
  /// Validates dimensions and ranges; throws ConfigError.
  void validate() const;
  Metadata to_metadata() const;
  static ModelConfig from_metadata(const Metadata& m);
  static ModelConfig for_domain(const Schema& schema, ModelKind kind);
};

/// Column-batched sequences: x[t] is (ego_dim x B), y[t] is (task_dim x B),
/// a[t] is (action_dim x B) and holds the action taken after step t.
struct SequenceBatch {
  std::vector<Matrix> x;
  std::vector<Matrix> y;
  std::vector<Matrix> a;

  int length() const { return static_cast<int>(x.size()); }
  Index batch() const { return x.empty() ? 0 : x.front().cols(); }
};

SequenceBatch make_batch(const std::vector<Trajectory>& data, const std::vector<int>& indices);
SequenceBatch make_batch(const std::vector<Trajectory>& data);

/// Negative-ELBO decomposition, all averaged over the batch. Reconstruction
/// terms are negative log-likelihoods; for the deterministic baseline kl_s
/// holds the latent consistency penalty.
struct LossTerms {
  Var total;
  double recon_x = 0.0;
  double recon_y = 0.0;
  double kl_s = 0.0;
  double kl_h = 0.0;
  /// Prior-chain KL of the decomposed model (see ModelConfig::chain_weight).
  double kl_chain = 0.0;
  std::vector<double> kl_s_steps;
  std::vector<double> kl_h_steps;
};

struct LatentSample {
  Vector s;
  Vector h;
};

/// N belief samples at one step. Columns of `latent` are [s; h] for the
/// decomposed model and z for the baselines; `task_mean` holds the decoded
/// task-complete observation means.
struct BeliefEnsemble {
  Matrix latent;
  Matrix task_mean;

  Index size() const { return latent.cols(); }
};

class WorldModel {
 public:
  virtual ~WorldModel() = default;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }

  /// Negative ELBO (or the deterministic surrogate) of a batch. `noise`
  /// drives latent sampling; `dropout` draws the baselines' task-observation
  /// mask so that it stays independent of the latent noise.
  virtual LossTerms loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout) const = 0;

  /// Beliefs at every step of an ego history for N parallel samples. `x[t]`
  /// is (ego_dim x N) and `a[t]` (action_dim x N) is the action after step t.
  /// Uses only ego observations and actions; task observations are never read.
  virtual std::vector<BeliefEnsemble> rollout_beliefs(const std::vector<Matrix>& x, const std::vector<Matrix>& a,
                                                      Rng& rng) const = 0;

  /// Convenience wrapper replicating one history over N columns.
  std::vector<BeliefEnsemble> sample_beliefs(const std::vector<Vector>& x, const std::vector<int>& actions, int n,
                                             Rng& rng) const;
  /// Belief at the last step of the history.
  BeliefEnsemble sample_robot_belief(const std::vector<Vector>& x, const std::vector<int>& actions, int n,
                                     Rng& rng) const;

  ParamList parameters();
  std::vector<const Param*> parameters() const;

  bool trained() const { return trained_; }
  void mark_trained(int epochs) { trained_ = true; epochs_trained_ = epochs; }
  int epochs_trained() const { return epochs_trained_; }

  void save(const std::filesystem::path& path, const Metadata& extra = {}) const;

 protected:
  explicit WorldModel(ModelConfig config) : config_(std::move(config)) {}
  virtual void collect(ParamList& out) = 0;
  void require_trained() const;

  ModelConfig config_;
  bool trained_ = false;
  int epochs_trained_ = 0;
};

/// Decomposed model: s from ego observations, h from task observations,
/// with learned transitions p(s_t | s,h,a) and p(h_t | s,h,a, s_t).
class LeaptModel final : public WorldModel {
 public:
  LeaptModel(ModelConfig config, std::uint64_t seed);

  LossTerms loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout) const override;
  std::vector<BeliefEnsemble> rollout_beliefs(const std::vector<Matrix>& x, const std::vector<Matrix>& a,
                                              Rng& rng) const override;

  DiagGaussian<double> infer_s_posterior(const std::vector<Vector>& x_history) const;
  DiagGaussian<double> infer_h_posterior(const std::vector<Vector>& y_history) const;
  /// p(h_1 | s_1) when `previous` is null, else p(h_t | s_{t-1}, h_{t-1}, a_{t-1}, s_t).
  DiagGaussian<double> prior_h(const Vector& s, const LatentSample* previous = nullptr,
                               const Vector* previous_action = nullptr) const;
  /// p(s_1) = N(0, I) when `previous` is null, else p(s_t | s_{t-1}, h_{t-1}, a_{t-1}).
  DiagGaussian<double> prior_s(const LatentSample* previous = nullptr, const Vector* previous_action = nullptr) const;
  /// Decoder means of every task modality for one latent.
  Vector decode_task_mean(const LatentSample& z) const;
  /// One draw from the task decoder distribution.
  Vector decode_task_obs(const LatentSample& z, Rng& rng) const;
  Vector decode_ego_mean(const Vector& s) const;

  /// Posterior heads over whole sequences (used by tests and the loss).
  std::vector<GaussianVar> s_posteriors(Tape& tape, const std::vector<Matrix>& x) const;
  std::vector<GaussianVar> h_posteriors(Tape& tape, const std::vector<Matrix>& y) const;
  GaussianVar s_prior(Tape& tape, const Var& s, const Var& h, const Var& a) const;
  GaussianVar h_prior_initial(Tape& tape, const Var& s) const;
  GaussianVar h_prior(Tape& tape, const Var& s_prev, const Var& h_prev, const Var& a_prev, const Var& s) const;
  Var decode_x(Tape& tape, const Var& s) const;
  Var decode_y(Tape& tape, const Var& s, const Var& h) const;

  /// With `freeze_posteriors_to_priors` the encoders are replaced by the
  /// priors, so every KL term vanishes.
  LossTerms loss_with(Tape& tape, const SequenceBatch& batch, Rng& noise, bool freeze_posteriors_to_priors) const;

 protected:
  void collect(ParamList& out) override;

 private:
  std::unique_ptr<SequenceEncoder> enc_x_;
  std::unique_ptr<SequenceEncoder> enc_y_;
  std::unique_ptr<Linear> s_head_;
  std::unique_ptr<Linear> h_head_;
  std::unique_ptr<Mlp> f_;
  std::unique_ptr<Mlp> g_;
  std::unique_ptr<Mlp> h1_;
  std::vector<Mlp> dec_x_;
  std::vector<Mlp> dec_y_;
};

/// Single-latent model. Stochastic variant: ELBO with task observations
/// dropped from the encoder input per trajectory. Deterministic variant:
/// reconstruction plus a squared latent-consistency penalty.
class BaselineModel final : public WorldModel {
 public:
  BaselineModel(ModelConfig config, std::uint64_t seed);

  LossTerms loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout) const override;
  /// Same with an explicit drop probability instead of the configured one.
  LossTerms loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng& dropout, double dropout_prob) const;
  std::vector<BeliefEnsemble> rollout_beliefs(const std::vector<Matrix>& x, const std::vector<Matrix>& a,
                                              Rng& rng) const override;

  bool stochastic() const { return config_.kind == ModelKind::BaselineS; }
  /// Encoder input of the last loss call (tests inspect the dropout mask).
  const std::vector<Matrix>& last_encoder_input() const { return last_input_; }

 protected:
  void collect(ParamList& out) override;

 private:
  std::vector<GaussianVar> posteriors(Tape& tape, const std::vector<Matrix>& inputs) const;
  Var decode_x(Tape& tape, const Var& z) const;
  Var decode_y(Tape& tape, const Var& z) const;

  std::unique_ptr<SequenceEncoder> enc_;
  std::unique_ptr<Linear> z_head_;
  std::unique_ptr<Mlp> f_;
  std::vector<Mlp> dec_x_;
  std::vector<Mlp> dec_y_;
  mutable std::vector<Matrix> last_input_;
};

std::unique_ptr<WorldModel> create_model(const ModelConfig& config, std::uint64_t seed);
std::unique_ptr<WorldModel> load_model(const std::filesystem::path& path);

// ---- training -----------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double recon_x = 0.0;
  double recon_y = 0.0;
  double kl_s = 0.0;
  double kl_h = 0.0;
  double kl_chain = 0.0;
};

struct TrainConfig {
  int epochs = 100;
  /// Trajectories per optimizer step; <= 0 uses the whole dataset.
  int batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 1;
  /// Epoch numbering starts after this many completed epochs (resume).
  int start_epoch = 0;
  std::function<void(const EpochStats&)> on_epoch;

  /// Epochs, batch size and learning rate from the domain schema.
  static TrainConfig for_domain(const Schema& schema, std::uint64_t seed);
};

/// Trains in place; throws NumericalError naming the epoch on divergence.
std::vector<EpochStats> train(WorldModel& model, const std::vector<Trajectory>& data, const TrainConfig& config);

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochStats>& stats, bool append);

/// "name:dim,name:dim" encoding used in checkpoint metadata.
std::string modalities_to_string(const std::vector<Modality>& ms);
std::vector<Modality> modalities_from_string(const std::string& s);

// ---- flat key = value configuration files ---------------------------------------

using KeyValues = std::map<std::string, std::string>;

/// Lines of `key = value`; '#' starts a comment. Throws ConfigError on
/// malformed lines.
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

}  // namespace leapt
