// Visual perspective-taking (pose-conditioned observation synthesis from
// decoded task-complete observations) and belief perspective-taking (the
// self-model run on synthesized observation histories of the other agent).
#pragma once

#include "leapt/worldmodel.hpp"

namespace leapt {

/// d_chi: (y, pose) -> predicted ego observation, one head per ego modality.
class PerspectiveModel {
 public:
  PerspectiveModel(std::vector<Modality> task, std::vector<Modality> ego, int pose_dim, std::vector<int> hidden,
                   std::uint64_t seed);

  int task_dim() const { return task_dim_; }
  int ego_dim() const { return ego_dim_; }
  int pose_dim() const { return pose_dim_; }
  const std::vector<Modality>& ego() const { return ego_; }
  const std::vector<Modality>& task() const { return task_; }

  /// Column-batched prediction: y is (task_dim x N), poses (pose_dim x N)
  /// or a single column broadcast over N.
  Matrix predict(const Matrix& y, const Matrix& poses) const;
  Frame predict(const Vector& y, const Vector& pose) const;
  Var forward(Tape& tape, const Matrix& y, const Matrix& poses) const;

  ParamList parameters();
  void save(const std::filesystem::path& path) const;
  static PerspectiveModel load(const std::filesystem::path& path);

 private:
  std::vector<Modality> task_;
  std::vector<Modality> ego_;
  int pose_dim_;
  int task_dim_;
  int ego_dim_;
  std::vector<int> hidden_;
  std::vector<Mlp> heads_;
};

/// One (x, y, pose) tuple of a robot roll-out.
struct PerspectiveSample {
  Vector y;
  Vector pose;
  Vector x;
};

std::vector<PerspectiveSample> perspective_samples(const std::vector<Trajectory>& data);

struct PerspectiveTrainConfig {
  int epochs = 300;
  int batch_size = 32;
  AdamConfig adam{3e-3};
  std::uint64_t seed = 1;
  /// Fraction of tuples held out for the reported error.
  double holdout_fraction = 0.1;
};

struct PerspectiveReport {
  double train_mse = 0.0;
  double heldout_mse = 0.0;
  /// Set when every tuple shares one pose: pose dependence cannot be learned.
  bool single_pose = false;
};

PerspectiveReport train_perspective(PerspectiveModel& model, const std::vector<PerspectiveSample>& data,
                                    const PerspectiveTrainConfig& config);

/// x-hat for the other agent at the last step of the robot's history:
/// robot belief -> decoded y -> d_chi(y, other_pose). Returns (ego_dim x N).
Matrix sample_human_observation(const WorldModel& world, const PerspectiveModel& perspective,
                                const std::vector<Vector>& ego_history, const std::vector<int>& actions,
                                const Vector& human_pose, int n, Rng& rng);

struct HumanBeliefEnsemble {
  /// Per step, N human-belief samples; column j belongs to history j.
  std::vector<BeliefEnsemble> beliefs;
  /// Per step, the synthesized human observations (ego_dim x N).
  std::vector<Matrix> observations;
  /// Per step, the robot's world samples that produced the observations.
  std::vector<BeliefEnsemble> world;
};

/// Samples N world histories from the robot's belief, synthesizes the human's
/// observation history for each with d_chi at the human's poses, and runs the
/// self-model on it with the actions as the human perceived them.
HumanBeliefEnsemble infer_human_belief(const WorldModel& world, const PerspectiveModel& perspective,
                                       const std::vector<Vector>& ego_history, const std::vector<int>& actions,
                                       const std::vector<Vector>& human_poses, const std::vector<int>& human_actions,
                                       int n, Rng& rng);

/// Runs the self-model on one fixed observation history for N belief samples.
std::vector<BeliefEnsemble> beliefs_from_history(const WorldModel& world, const std::vector<Vector>& observations,
                                                 const std::vector<int>& actions, int n, Rng& rng);

}  // namespace leapt
