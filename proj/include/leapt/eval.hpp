// Labelling of sampled observations, empirical belief distributions and the
// three KL measures (robot belief, visual perspective, conditional belief),
// plus CSV/SVG reporting.
#pragma once

#include "leapt/perspective.hpp"

#include <set>

namespace leapt {

/// Labels of every column of a (task_dim x N) matrix of task observations.
std::vector<Label> label_task_columns(const Domain& domain, const Matrix& task);
/// Labels of every column of a (ego_dim x N) matrix of ego observations.
std::vector<Label> label_view_columns(const Domain& domain, const Matrix& ego);

/// Smoothed categorical or moment-matched Gaussian estimate of a label
/// distribution.
struct EmpiricalDist {
  bool continuous = false;
  int samples = 0;
  double alpha = 0.0;
  Vector probs;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d var = Eigen::Vector2d::Ones();
};

/// Discrete: (count_i + alpha) / (N + alpha * K). Continuous: sample mean and
/// per-axis variance floored at kBeliefVarianceFloor. Throws on no samples.
EmpiricalDist empirical_from_labels(const std::vector<Label>& labels, const LabelSpace& space, double alpha);

/// KL(empirical || oracle). A discrete oracle p is smoothed with the same
/// pseudo-counts, (N p_i + alpha) / (N + alpha K), so delta oracles stay finite.
double kl_to_oracle(const EmpiricalDist& empirical, const GroundTruthBelief& oracle);

/// Entropy (nats) of the unsmoothed label histogram; continuous labels are
/// not supported.
double label_entropy(const std::vector<Label>& labels, int classes);

/// Most frequent class; ties go to the lowest index.
int mode_label(const std::vector<Label>& labels, int classes);

struct EvalConfig {
  int n = 200;
  int n_outer = 20;
  int n_inner = 50;
  double alpha = 0.01;
  /// Likelihood of a contradicting observation in the oracle applied to
  /// synthesized histories, which need not be exactly consistent.
  double confusion = 0.01;
};

/// Robot belief vs the exact posterior given the robot's ego history, per step.
std::vector<double> robot_belief_kl(const Domain& domain, const WorldModel& model, const Trajectory& episode,
                                    const EvalConfig& config, Rng& rng);

/// Labels of synthesized human observations vs what the robot can infer the
/// human sees, per step.
std::vector<double> visual_pt_kl(const Domain& domain, const WorldModel& model, const PerspectiveModel& perspective,
                                 const Trajectory& episode, const EvalConfig& config, Rng& rng);

/// Per-step human-belief estimates for N_outer synthesized human histories,
/// each with N_inner belief samples.
struct ConditionalBeliefs {
  /// world_labels[t][j]: task label of world sample j at step t.
  std::vector<std::vector<Label>> world_labels;
  /// human_labels[j][t]: N_inner human-belief labels for history j at step t.
  std::vector<std::vector<std::vector<Label>>> human_labels;
  /// kl[t][j]: KL against the oracle conditioned on history j.
  std::vector<std::vector<double>> kl;
  /// Human-belief latents of the first inner sample per history, final step.
  Matrix final_latents;
};

ConditionalBeliefs conditional_beliefs(const Domain& domain, const WorldModel& model,
                                       const PerspectiveModel& perspective, const Trajectory& episode,
                                       const EvalConfig& config, Rng& rng);

/// Cond KL per step: mean over the synthesized histories.
std::vector<double> belief_pt_cond_kl(const Domain& domain, const WorldModel& model,
                                      const PerspectiveModel& perspective, const Trajectory& episode,
                                      const EvalConfig& config, Rng& rng);

/// False-Belief: fraction of (world sample, human-belief sample) pairs at
/// the last step whose believed side relates to the sampled world side as it
/// should (different after an unseen switch, equal otherwise).
double false_belief_accuracy(const Domain& domain, const ConditionalBeliefs& beliefs, bool switched);

/// True when the robot switched the boxes during the episode.
bool episode_switched(const Trajectory& episode);

// ---- reporting --------------------------------------------------------------

inline const std::vector<std::string> kMetricNames = {"robot_kl", "visual_pt_kl", "cond_kl"};

struct MetricRow {
  std::string domain;
  std::string model;
  std::uint64_t seed = 0;
  int episode = 0;
  int step = 0;
  std::string metric;
  double value = 0.0;
};

struct AccuracyRow {
  std::string model;
  std::uint64_t seed = 0;
  bool switched = false;
  double accuracy = 0.0;
};

struct EvaluationResult {
  std::vector<MetricRow> metrics;
  std::vector<AccuracyRow> accuracy;
  /// Final-step human-belief latents of every episode (columns), for PCA.
  Matrix latents;
};

/// Runs the requested metrics on every episode. Per-episode streams derive
/// from `seed` so results do not depend on metric selection order.
EvaluationResult evaluate(const Domain& domain, const WorldModel& model, const PerspectiveModel& perspective,
                          const std::vector<Trajectory>& episodes, const EvalConfig& config, std::uint64_t seed,
                          const std::set<std::string>& metrics);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
void write_accuracy_csv(const std::filesystem::path& path, const std::vector<AccuracyRow>& rows);

/// One SVG per (domain, metric): mean over seeds and episodes per step and
/// model, with a +-1 std band. Returns the files written.
std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const std::vector<MetricRow>& rows);

/// Projects columns onto their first two principal components and writes
/// `index,pc1,pc2` rows.
void write_pca_csv(const std::filesystem::path& path, const Matrix& samples);
Matrix principal_components(const Matrix& samples, int k);

}  // namespace leapt
