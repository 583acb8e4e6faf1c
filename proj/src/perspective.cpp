#include "leapt/perspective.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <sstream>

namespace leapt {

namespace {

int sum_dims(const std::vector<Modality>& ms) {
  int d = 0;
  for (const auto& m : ms) d += m.dim;
  return d;
}

Matrix action_matrix(int a, int action_dim, Index n) {
  Matrix m = Matrix::Zero(action_dim, n);
  if (a >= 0 && a < action_dim) m.row(a).setOnes();
  return m;
}

std::string hidden_to_string(const std::vector<int>& h) {
  std::string out;
  for (int w : h) out += (out.empty() ? "" : ",") + std::to_string(w);
  return out;
}

std::vector<int> hidden_from_string(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

PerspectiveModel::PerspectiveModel(std::vector<Modality> task, std::vector<Modality> ego, int pose_dim,
                                   std::vector<int> hidden, std::uint64_t seed)
    : task_(std::move(task)),
      ego_(std::move(ego)),
      pose_dim_(pose_dim),
      task_dim_(sum_dims(task_)),
      ego_dim_(sum_dims(ego_)),
      hidden_(std::move(hidden)) {
  if (pose_dim_ < 1) throw ConfigError("perspective model: pose_dim must be >= 1");
  Rng rng = derive_rng(seed, 0xd0c1);
  for (const auto& m : ego_)
    heads_.emplace_back("d_chi." + m.name, MlpSpec{task_dim_ + pose_dim_, m.dim, hidden_, Activation::Tanh}, rng, true);
}

Var PerspectiveModel::forward(Tape& tape, const Matrix& y, const Matrix& poses) const {
  if (y.rows() != task_dim_) throw ConfigError("perspective model: task observation has wrong dimension");
  if (poses.rows() != pose_dim_) throw ConfigError("perspective model: pose has wrong dimension");
  const Index n = y.cols();
  Matrix p = poses.cols() == n ? poses : poses.col(0).replicate(1, n);
  if (poses.cols() != n && poses.cols() != 1) throw ConfigError("perspective model: pose batch mismatch");
  Matrix in(task_dim_ + pose_dim_, n);
  in << y, p;
  Var x = tape.constant(std::move(in));
  std::vector<Var> parts;
  for (const Mlp& head : heads_) parts.push_back(head(tape, x));
  return vcat(parts);
}

Matrix PerspectiveModel::predict(const Matrix& y, const Matrix& poses) const {
  Tape tape(false);
  return forward(tape, y, poses).value();
}

Frame PerspectiveModel::predict(const Vector& y, const Vector& pose) const {
  return split(predict(Matrix(y), Matrix(pose)).col(0), ego_);
}

ParamList PerspectiveModel::parameters() {
  ParamList out;
  for (Mlp& h : heads_) h.collect(out);
  return out;
}

void PerspectiveModel::save(const std::filesystem::path& path) const {
  Metadata meta{{"kind", "perspective"},
                {"task", modalities_to_string(task_)},
                {"ego", modalities_to_string(ego_)},
                {"pose_dim", std::to_string(pose_dim_)},
                {"hidden", hidden_to_string(hidden_)}};
  save_checkpoint(path, const_cast<PerspectiveModel*>(this)->parameters(), meta);
}

PerspectiveModel PerspectiveModel::load(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  auto get = [&](const std::string& k) {
    auto it = ckpt.metadata.find(k);
    if (it == ckpt.metadata.end()) throw ConfigError("perspective checkpoint lacks '" + k + "'");
    return it->second;
  };
  if (get("kind") != "perspective") throw ConfigError(path.string() + " is not a perspective checkpoint");
  PerspectiveModel m(modalities_from_string(get("task")), modalities_from_string(get("ego")), std::stoi(get("pose_dim")),
                     hidden_from_string(get("hidden")), 0);
  load_into(ckpt, m.parameters());
  return m;
}

std::vector<PerspectiveSample> perspective_samples(const std::vector<Trajectory>& data) {
  std::vector<PerspectiveSample> out;
  for (const auto& tr : data)
    for (const auto& s : tr.steps) out.push_back({concat(s.task), s.robot_pose, concat(s.ego)});
  return out;
}

PerspectiveReport train_perspective(PerspectiveModel& model, const std::vector<PerspectiveSample>& data,
                                    const PerspectiveTrainConfig& config) {
  if (data.empty()) throw ConfigError("train_perspective: empty dataset");
  PerspectiveReport report;
  report.single_pose = std::all_of(data.begin(), data.end(),
                                   [&](const PerspectiveSample& s) { return s.pose.isApprox(data.front().pose); });
  if (report.single_pose)
    std::cerr << "warning: perspective data contain a single pose; pose dependence cannot be learned\n";

  Rng split_rng = derive_rng(config.seed, 0x5b1);
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), split_rng);
  std::size_t n_hold = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(data.size()));
  if (n_hold >= data.size()) n_hold = 0;
  std::vector<int> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<int> train(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());

  auto gather = [&](const std::vector<int>& ids, Matrix& y, Matrix& p, Matrix& x) {
    y.resize(model.task_dim(), static_cast<Index>(ids.size()));
    p.resize(model.pose_dim(), static_cast<Index>(ids.size()));
    x.resize(model.ego_dim(), static_cast<Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      y.col(static_cast<Index>(j)) = data[ids[j]].y;
      p.col(static_cast<Index>(j)) = data[ids[j]].pose;
      x.col(static_cast<Index>(j)) = data[ids[j]].x;
    }
  };
  auto mse = [&](const std::vector<int>& ids) {
    if (ids.empty()) return 0.0;
    Matrix y, p, x;
    gather(ids, y, p, x);
    return (model.predict(y, p) - x).squaredNorm() / static_cast<double>(x.size());
  };

  Adam adam(model.parameters(), config.adam);
  const int batch = config.batch_size <= 0 ? static_cast<int>(train.size())
                                           : std::min<int>(config.batch_size, static_cast<int>(train.size()));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle = derive_rng(config.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(train.begin(), train.end(), shuffle);
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(batch)) {
      std::vector<int> ids(train.begin() + static_cast<std::ptrdiff_t>(start),
                           train.begin() + static_cast<std::ptrdiff_t>(std::min(train.size(), start + batch)));
      Matrix y, p, x;
      gather(ids, y, p, x);
      Tape tape;
      Var err = model.forward(tape, y, p) - tape.constant(x);
      Var loss = (1.0 / static_cast<double>(ids.size())) * sum(square(err));
      tape.backward(loss);
      adam.step();
    }
  }
  report.train_mse = mse(train);
  report.heldout_mse = mse(hold);
  return report;
}

Matrix sample_human_observation(const WorldModel& world, const PerspectiveModel& perspective,
                                const std::vector<Vector>& ego_history, const std::vector<int>& actions,
                                const Vector& human_pose, int n, Rng& rng) {
  if (human_pose.size() != perspective.pose_dim()) throw ConfigError("sample_human_observation: pose dim mismatch");
  BeliefEnsemble world_samples = world.sample_robot_belief(ego_history, actions, n, rng);
  return perspective.predict(world_samples.task_mean, Matrix(human_pose));
}

std::vector<BeliefEnsemble> beliefs_from_history(const WorldModel& world, const std::vector<Vector>& observations,
                                                 const std::vector<int>& actions, int n, Rng& rng) {
  return world.sample_beliefs(observations, actions, n, rng);
}

HumanBeliefEnsemble infer_human_belief(const WorldModel& world, const PerspectiveModel& perspective,
                                       const std::vector<Vector>& ego_history, const std::vector<int>& actions,
                                       const std::vector<Vector>& human_poses, const std::vector<int>& human_actions,
                                       int n, Rng& rng) {
  const std::size_t T = ego_history.size();
  if (human_poses.size() < T) throw ConfigError("infer_human_belief: missing human pose at some step");
  for (const auto& p : human_poses)
    if (p.size() != perspective.pose_dim()) throw ConfigError("infer_human_belief: pose dim mismatch");

  HumanBeliefEnsemble out;
  out.world = world.sample_beliefs(ego_history, actions, n, rng);
  std::vector<Matrix> acts;
  for (std::size_t t = 0; t < T; ++t) {
    out.observations.push_back(perspective.predict(out.world[t].task_mean, Matrix(human_poses[t])));
    int a = t < human_actions.size() ? human_actions[t] : -1;
    acts.push_back(action_matrix(a, world.config().action_dim, n));
  }
  out.beliefs = world.rollout_beliefs(out.observations, acts, rng);
  return out;
}

}  // namespace leapt
