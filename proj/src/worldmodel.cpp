#include "leapt/worldmodel.hpp"

#include <sstream>

namespace leapt {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Leapt: return "leapt";
    case ModelKind::LeaptAttn: return "leapt-attn";
    case ModelKind::BaselineS: return "baseline-s";
    case ModelKind::BaselineD: return "baseline-d";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "leapt") return ModelKind::Leapt;
  if (name == "leapt-attn") return ModelKind::LeaptAttn;
  if (name == "baseline-s") return ModelKind::BaselineS;
  if (name == "baseline-d") return ModelKind::BaselineD;
  throw ConfigError("unknown model kind '" + name + "' (expected leapt, leapt-attn, baseline-s or baseline-d)");
}

// ---- configuration ------------------------------------------------------------

namespace {

int sum_dims(const std::vector<Modality>& ms) {
  int d = 0;
  for (const auto& m : ms) d += m.dim;
  return d;
}

const std::string& required(const Metadata& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Vector one_hot_or_zero(int k, int n) {
  Vector v = Vector::Zero(n);
  if (k >= 0 && k < n) v[k] = 1.0;
  return v;
}

DiagGaussian<double> first_column(const GaussianVar& g) {
  return DiagGaussian<double>(g.mean.value().col(0), g.log_var.value().col(0));
}

}  // namespace

int ModelConfig::ego_dim() const { return sum_dims(ego); }
int ModelConfig::task_dim() const { return sum_dims(task); }

void ModelConfig::validate() const {
  if (ego.empty() || task.empty()) throw ConfigError("model config: ego and task modalities required");
  for (const auto& m : ego)
    if (m.dim < 1) throw ConfigError("model config: modality '" + m.name + "' must have dim >= 1");
  for (const auto& m : task)
    if (m.dim < 1) throw ConfigError("model config: modality '" + m.name + "' must have dim >= 1");
  if (action_dim < 1) throw ConfigError("model config: action_dim must be >= 1");
  if (s_dim < 1 || h_dim < 0 || z_dim < 1) throw ConfigError("model config: need s_dim >= 1, h_dim >= 0, z_dim >= 1");
  if (hidden < 1) throw ConfigError("model config: hidden must be >= 1");
  if (kind == ModelKind::LeaptAttn && (attn_heads < 1 || hidden % attn_heads != 0))
    throw ConfigError("model config: hidden must be divisible by attn_heads");
  if (max_len < 1) throw ConfigError("model config: max_len must be >= 1");
  if (!(obs_std > 0.0)) throw ConfigError("model config: obs_std must be positive");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw ConfigError("model config: dropout_prob must be in [0, 1]");
  if (!(consistency_weight >= 0.0)) throw ConfigError("model config: consistency_weight must be >= 0");
  if (!(chain_weight >= 0.0)) throw ConfigError("model config: chain_weight must be >= 0");
}

Metadata ModelConfig::to_metadata() const {
  return {{"kind", to_string(kind)},
          {"domain", domain},
          {"ego", modalities_to_string(ego)},
          {"task", modalities_to_string(task)},
          {"action_dim", std::to_string(action_dim)},
          {"s_dim", std::to_string(s_dim)},
          {"h_dim", std::to_string(h_dim)},
          {"z_dim", std::to_string(z_dim)},
          {"hidden", std::to_string(hidden)},
          {"attn_heads", std::to_string(attn_heads)},
          {"max_len", std::to_string(max_len)},
          {"obs_std", format_double(obs_std)},
          {"dropout_prob", format_double(dropout_prob)},
          {"consistency_weight", format_double(consistency_weight)},
          {"chain_weight", format_double(chain_weight)}};
}

ModelConfig ModelConfig::from_metadata(const Metadata& m) {
  ModelConfig c;
  c.kind = parse_model_kind(required(m, "kind"));
  c.domain = required(m, "domain");
  c.ego = modalities_from_string(required(m, "ego"));
  c.task = modalities_from_string(required(m, "task"));
  c.action_dim = std::stoi(required(m, "action_dim"));
  c.s_dim = std::stoi(required(m, "s_dim"));
  c.h_dim = std::stoi(required(m, "h_dim"));
  c.z_dim = std::stoi(required(m, "z_dim"));
  c.hidden = std::stoi(required(m, "hidden"));
  c.attn_heads = std::stoi(required(m, "attn_heads"));
  c.max_len = std::stoi(required(m, "max_len"));
  c.obs_std = std::stod(required(m, "obs_std"));
  c.dropout_prob = std::stod(required(m, "dropout_prob"));
  c.consistency_weight = std::stod(required(m, "consistency_weight"));
  c.chain_weight = std::stod(required(m, "chain_weight"));
  c.validate();
  return c;
}

ModelConfig ModelConfig::for_domain(const Schema& schema, ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.domain = schema.name;
  c.ego = schema.ego;
  c.task = schema.task;
  c.action_dim = schema.action_dim();
  c.max_len = schema.horizon;
  c.obs_std = schema.obs_std;
  c.chain_weight = schema.chain_weight;
  return c;
}

std::string modalities_to_string(const std::vector<Modality>& ms) {
  std::string out;
  for (const auto& m : ms) {
    if (!out.empty()) out += ',';
    out += m.name + ':' + std::to_string(m.dim);
  }
  return out;
}

std::vector<Modality> modalities_from_string(const std::string& s) {
  std::vector<Modality> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("malformed modality list '" + s + "'");
    out.push_back({item.substr(0, colon), std::stoi(item.substr(colon + 1))});
  }
  return out;
}

// ---- batches ------------------------------------------------------------------

SequenceBatch make_batch(const std::vector<Trajectory>& data, const std::vector<int>& indices) {
  SequenceBatch b;
  if (indices.empty()) return b;
  const Trajectory& first = data.at(indices.front());
  const int T = first.length();
  const Index B = static_cast<Index>(indices.size());
  const Index dx = concat(first.steps[0].ego).size(), dy = concat(first.steps[0].task).size();
  const Index da = first.steps[0].action.size();
  b.x.assign(T, Matrix(dx, B));
  b.y.assign(T, Matrix(dy, B));
  b.a.assign(T, Matrix(da, B));
  for (Index j = 0; j < B; ++j) {
    const Trajectory& tr = data.at(indices[j]);
    if (tr.length() != T) throw ConfigError("make_batch: trajectories differ in length");
    for (int t = 0; t < T; ++t) {
      b.x[t].col(j) = concat(tr.steps[t].ego);
      b.y[t].col(j) = concat(tr.steps[t].task);
      b.a[t].col(j) = tr.steps[t].action;
    }
  }
  return b;
}

SequenceBatch make_batch(const std::vector<Trajectory>& data) {
  std::vector<int> all(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) all[i] = static_cast<int>(i);
  return make_batch(data, all);
}

// ---- shared model plumbing ----------------------------------------------------------

std::vector<BeliefEnsemble> WorldModel::sample_beliefs(const std::vector<Vector>& x, const std::vector<int>& actions,
                                                       int n, Rng& rng) const {
  require_trained();
  if (x.empty()) throw ConfigError("sample_beliefs: empty history");
  if (n < 1) throw ConfigError("sample_beliefs: need at least one sample");
  std::vector<Matrix> xs, as;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t].size() != config_.ego_dim()) throw ConfigError("sample_beliefs: ego dimension mismatch");
    xs.push_back(x[t].replicate(1, n));
    int a = t < actions.size() ? actions[t] : -1;
    as.push_back(one_hot_or_zero(a, config_.action_dim).replicate(1, n));
  }
  return rollout_beliefs(xs, as, rng);
}

BeliefEnsemble WorldModel::sample_robot_belief(const std::vector<Vector>& x, const std::vector<int>& actions, int n,
                                               Rng& rng) const {
  return sample_beliefs(x, actions, n, rng).back();
}

ParamList WorldModel::parameters() {
  ParamList out;
  collect(out);
  return out;
}

std::vector<const Param*> WorldModel::parameters() const {
  ParamList ps = const_cast<WorldModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void WorldModel::require_trained() const {
  if (!trained_) throw ConfigError("model '" + to_string(config_.kind) + "' is untrained");
}

void WorldModel::save(const std::filesystem::path& path, const Metadata& extra) const {
  Metadata meta = config_.to_metadata();
  meta["epochs_trained"] = std::to_string(epochs_trained_);
  for (const auto& [k, v] : extra) meta[k] = v;
  save_checkpoint(path, const_cast<WorldModel*>(this)->parameters(), meta);
}

std::unique_ptr<WorldModel> create_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  if (is_leapt(config.kind)) return std::make_unique<LeaptModel>(config, seed);
  return std::make_unique<BaselineModel>(config, seed);
}

std::unique_ptr<WorldModel> load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  auto model = create_model(ModelConfig::from_metadata(ckpt.metadata), 0);
  load_into(ckpt, model->parameters());
  auto it = ckpt.metadata.find("epochs_trained");
  model->mark_trained(it == ckpt.metadata.end() ? 0 : std::stoi(it->second));
  return model;
}

// ---- decomposed model ---------------------------------------------------------------

namespace {

std::unique_ptr<SequenceEncoder> make_encoder(const ModelConfig& c, const std::string& name, int input_dim, Rng& rng) {
  if (c.kind == ModelKind::LeaptAttn)
    return std::make_unique<AttentionEncoder>(name, input_dim, c.hidden, c.attn_heads, c.max_len, rng);
  return std::make_unique<GruEncoder>(name, input_dim, c.hidden, rng);
}

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

void check_finite(double v, const char* term, int t) {
  if (!std::isfinite(v))
    throw NumericalError(std::string("loss term ") + term + " is non-finite at step " + std::to_string(t + 1));
}

}  // namespace

LeaptModel::LeaptModel(ModelConfig config, std::uint64_t seed) : WorldModel(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  Rng rng = derive_rng(seed, 0x1ea97);
  const int sha = c.s_dim + c.h_dim + c.action_dim;
  enc_x_ = make_encoder(c, "enc_x", c.ego_dim(), rng);
  enc_y_ = make_encoder(c, "enc_y", c.task_dim(), rng);
  s_head_ = std::make_unique<Linear>("q_s", c.hidden, 2 * c.s_dim, rng, true);
  h_head_ = std::make_unique<Linear>("q_h", c.hidden, 2 * c.h_dim, rng, true);
  f_ = std::make_unique<Mlp>("f", MlpSpec{sha, 2 * c.s_dim, {c.hidden}, Activation::Tanh}, rng, true);
  g_ = std::make_unique<Mlp>("g", MlpSpec{sha + c.s_dim, 2 * c.h_dim, {c.hidden}, Activation::Tanh}, rng, true);
  h1_ = std::make_unique<Mlp>("p_h1", MlpSpec{c.s_dim, 2 * c.h_dim, {c.hidden}, Activation::Tanh}, rng, true);
  dec_x_ = make_decoders("dec_x", c.ego, c.s_dim, c.hidden, rng);
  dec_y_ = make_decoders("dec_y", c.task, c.s_dim + c.h_dim, c.hidden, rng);
}

void LeaptModel::collect(ParamList& out) {
  enc_x_->collect(out);
  enc_y_->collect(out);
  s_head_->collect(out);
  h_head_->collect(out);
  f_->collect(out);
  g_->collect(out);
  h1_->collect(out);
  for (Mlp& d : dec_x_) d.collect(out);
  for (Mlp& d : dec_y_) d.collect(out);
}

std::vector<GaussianVar> LeaptModel::s_posteriors(Tape& tape, const std::vector<Matrix>& x) const {
  std::vector<Var> in;
  for (const Matrix& m : x) in.push_back(tape.constant(m));
  std::vector<GaussianVar> out;
  for (const Var& e : enc_x_->encode(tape, in)) out.push_back(gaussian_from_head((*s_head_)(tape, e), config_.s_dim));
  return out;
}

std::vector<GaussianVar> LeaptModel::h_posteriors(Tape& tape, const std::vector<Matrix>& y) const {
  std::vector<Var> in;
  for (const Matrix& m : y) in.push_back(tape.constant(m));
  std::vector<GaussianVar> out;
  for (const Var& e : enc_y_->encode(tape, in)) out.push_back(gaussian_from_head((*h_head_)(tape, e), config_.h_dim));
  return out;
}

GaussianVar LeaptModel::s_prior(Tape& tape, const Var& s, const Var& h, const Var& a) const {
  return gaussian_from_head((*f_)(tape, vcat({s, h, a})), config_.s_dim);
}

GaussianVar LeaptModel::h_prior_initial(Tape& tape, const Var& s) const {
  return gaussian_from_head((*h1_)(tape, s), config_.h_dim);
}

GaussianVar LeaptModel::h_prior(Tape& tape, const Var& s_prev, const Var& h_prev, const Var& a_prev,
                                const Var& s) const {
  return gaussian_from_head((*g_)(tape, vcat({s_prev, h_prev, a_prev, s})), config_.h_dim);
}

Var LeaptModel::decode_x(Tape& tape, const Var& s) const { return decode_all(tape, dec_x_, s); }

Var LeaptModel::decode_y(Tape& tape, const Var& s, const Var& h) const { return decode_all(tape, dec_y_, vcat({s, h})); }

LossTerms LeaptModel::loss(Tape& tape, const SequenceBatch& batch, Rng& noise, Rng&) const {
  return loss_with(tape, batch, noise, false);
}

LossTerms LeaptModel::loss_with(Tape& tape, const SequenceBatch& batch, Rng& noise, bool freeze) const {
  const int T = batch.length();
  const Index B = batch.batch();
  if (T < 1 || B < 1) throw ConfigError("elbo: empty batch");
  const auto& c = config_;
  const double obs_log_var = 2.0 * std::log(c.obs_std);

  std::vector<GaussianVar> qs, qh;
  if (!freeze) {
    qs = s_posteriors(tape, batch.x);
    qh = h_posteriors(tape, batch.y);
  }

  LossTerms terms;
  Var elbo = tape.constant(Matrix::Zero(1, B));
  Var s_prev, h_prev, a_prev, chain_prev;
  const bool chain = !freeze && c.chain_weight > 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (int t = 0; t < T; ++t) {
    GaussianVar ps = t == 0 ? standard_gaussian(tape, c.s_dim, B) : s_prior(tape, s_prev, h_prev, a_prev);
    GaussianVar q_s = freeze ? ps : qs[t];
    Var s = rsample(q_s, standard_normal(c.s_dim, B, noise));
    GaussianVar ph = t == 0 ? h_prior_initial(tape, s) : h_prior(tape, s_prev, h_prev, a_prev, s);
    GaussianVar q_h = freeze ? ph : qh[t];
    Var h = rsample(q_h, standard_normal(c.h_dim, B, noise));

    Var kls = kl(q_s, ps);
    Var klh = kl(q_h, ph);
    Var lx = log_prob(fixed_variance(decode_x(tape, s), obs_log_var), tape.constant(batch.x[t]));
    Var ly = log_prob(fixed_variance(decode_y(tape, s, h), obs_log_var), tape.constant(batch.y[t]));
    elbo = elbo + lx + ly - kls - klh;

    // The test-time filter feeds g its own samples, which need not agree
    // with the posterior; this term trains g to recover from them.
    if (chain) {
      GaussianVar pc = t == 0 ? ph : h_prior(tape, s_prev, chain_prev, a_prev, s);
      if (t > 0) {
        Var klc = kl(q_h, pc);
        double kc = klc.value().sum() * inv_b;
        check_finite(kc, "kl_chain", t);
        terms.kl_chain += kc;
        elbo = elbo - c.chain_weight * klc;
      }
      chain_prev = rsample(pc, standard_normal(c.h_dim, B, noise));
    }

    double rx = -lx.value().sum() * inv_b, ry = -ly.value().sum() * inv_b;
    double ks = kls.value().sum() * inv_b, kh = klh.value().sum() * inv_b;
    check_finite(rx, "recon_x", t);
    check_finite(ry, "recon_y", t);
    check_finite(ks, "kl_s", t);
    check_finite(kh, "kl_h", t);
    terms.recon_x += rx;
    terms.recon_y += ry;
    terms.kl_s += ks;
    terms.kl_h += kh;
    terms.kl_s_steps.push_back(ks);
    terms.kl_h_steps.push_back(kh);

    s_prev = s;
    h_prev = h;
    a_prev = tape.constant(batch.a[t]);
  }
  terms.total = -inv_b * sum(elbo);
  return terms;
}

std::vector<BeliefEnsemble> LeaptModel::rollout_beliefs(const std::vector<Matrix>& x, const std::vector<Matrix>& a,
                                                        Rng& rng) const {
  if (x.empty()) throw ConfigError("rollout_beliefs: empty history");
  const auto& c = config_;
  const Index N = x.front().cols();
  Tape tape(false);
  std::vector<GaussianVar> qs = s_posteriors(tape, x);
  std::vector<BeliefEnsemble> out;
  Var s_prev, h_prev;
  for (std::size_t t = 0; t < x.size(); ++t) {
    Var s = rsample(qs[t], standard_normal(c.s_dim, N, rng));
    GaussianVar ph;
    if (t == 0) {
      ph = h_prior_initial(tape, s);
    } else {
      if (t - 1 >= a.size()) throw ConfigError("rollout_beliefs: missing action for step " + std::to_string(t));
      ph = h_prior(tape, s_prev, h_prev, tape.constant(a[t - 1]), s);
    }
    Var h = rsample(ph, standard_normal(c.h_dim, N, rng));
    BeliefEnsemble e;
    e.latent.resize(c.s_dim + c.h_dim, N);
    e.latent << s.value(), h.value();
    e.task_mean = decode_y(tape, s, h).value();
    out.push_back(std::move(e));
    s_prev = s;
    h_prev = h;
  }
  return out;
}

DiagGaussian<double> LeaptModel::infer_s_posterior(const std::vector<Vector>& x_history) const {
  if (x_history.empty()) throw ConfigError("infer_s_posterior: empty history");
  Tape tape(false);
  std::vector<Matrix> xs(x_history.begin(), x_history.end());
  return first_column(s_posteriors(tape, xs).back());
}

DiagGaussian<double> LeaptModel::infer_h_posterior(const std::vector<Vector>& y_history) const {
  if (y_history.empty()) throw ConfigError("infer_h_posterior: empty history");
  Tape tape(false);
  std::vector<Matrix> ys(y_history.begin(), y_history.end());
  return first_column(h_posteriors(tape, ys).back());
}

DiagGaussian<double> LeaptModel::prior_h(const Vector& s, const LatentSample* previous,
                                         const Vector* previous_action) const {
  if (s.size() != config_.s_dim) throw ConfigError("prior_h: s has wrong dimension");
  Tape tape(false);
  if (!previous) return first_column(h_prior_initial(tape, tape.constant(s)));
  if (!previous_action) throw ConfigError("prior_h: previous action required for t > 1");
  return first_column(h_prior(tape, tape.constant(previous->s), tape.constant(previous->h),
                              tape.constant(*previous_action), tape.constant(s)));
}

DiagGaussian<double> LeaptModel::prior_s(const LatentSample* previous, const Vector* previous_action) const {
  if (!previous) return DiagGaussian<double>::standard(config_.s_dim);
  if (!previous_action) throw ConfigError("prior_s: previous action required for t > 1");
  Tape tape(false);
  return first_column(
      s_prior(tape, tape.constant(previous->s), tape.constant(previous->h), tape.constant(*previous_action)));
}

Vector LeaptModel::decode_task_mean(const LatentSample& z) const {
  Tape tape(false);
  return decode_y(tape, tape.constant(z.s), tape.constant(z.h)).value().col(0);
}

Vector LeaptModel::decode_task_obs(const LatentSample& z, Rng& rng) const {
  Vector mean = decode_task_mean(z);
  return mean + config_.obs_std * standard_normal(mean.size(), 1, rng).col(0);
}

Vector LeaptModel::decode_ego_mean(const Vector& s) const {
  Tape tape(false);
  return decode_x(tape, tape.constant(s)).value().col(0);
}

}  // namespace leapt
