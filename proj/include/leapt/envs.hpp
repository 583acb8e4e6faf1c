// Partially observable two-agent domains with scripted Bayes-rational humans.
//
// Every domain renders ego observations as a function of (world state, pose):
// visibility is decided by where the observer stands, so the same renderer
// serves the robot and the human. Data-collection roll-outs move the robot
// through every pose; evaluation episodes keep it at its task pose, where the
// hidden quantity is never visible.
#pragma once

#include "leapt/distributions.hpp"
#include "leapt/rng.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace leapt {

enum class DomainId { FalseBelief, FetchTool, TableAssembly };

std::string to_string(DomainId id);
DomainId parse_domain(const std::string& name);

struct Modality {
  std::string name;
  int dim = 0;
};

struct Schema {
  DomainId id;
  std::string name;
  std::vector<Modality> ego;
  std::vector<Modality> task;
  std::vector<std::string> actions;
  int pose_dim = 4;
  int horizon = 5;
  int train_trajectories = 30;
  int epochs = 100;
  /// Training defaults that differ per domain.
  int batch_size = 4;
  double learning_rate = 1e-3;
  double obs_std = 0.1;
  double chain_weight = 1.0;

  int ego_dim() const;
  int task_dim() const;
  int action_dim() const { return static_cast<int>(actions.size()); }
};

/// One vector per modality.
using Frame = std::vector<Vector>;

Vector concat(const Frame& frame);
Frame split(const Vector& flat, const std::vector<Modality>& modalities);

struct Step {
  Frame ego;        // robot ego observation x^{1:M}
  Frame task;       // task-complete observation y^{1:K}
  Vector action;    // one-hot robot action taken after this step; zeros at the last step
  Vector robot_pose;
  Vector human_pose;
  Frame human_ego;  // what the simulated human observes (evaluation and tests)
};

struct Trajectory {
  int episode = 0;
  std::vector<Step> steps;

  int length() const { return static_cast<int>(steps.size()); }
  /// Action ids for steps 0..T-2; -1 where no action is recorded.
  std::vector<int> action_ids() const;
};

using Label = std::variant<int, Eigen::Vector2d>;

struct GaussianBelief {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d var = Eigen::Vector2d::Ones();
};

using GroundTruthBelief = std::variant<BernoulliDist, CategoricalDist, GaussianBelief>;

/// Discrete label spaces have `classes` > 0; continuous ones are 2-D reals.
struct LabelSpace {
  int classes = 0;
  bool continuous() const { return classes == 0; }
};

/// Raised by the oracles when no hypothesis explains a history exactly.
class InconsistentHistory : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kObservationNoise = 0.01;
inline constexpr double kBeliefVarianceFloor = 1e-4;

/// Pose encoding shared by all domains: [x, y, cos(heading), sin(heading)],
/// heading toward the origin.
Vector pose_facing_origin(double x, double y);
int nearest_row(const std::vector<Vector>& prototypes, const Vector& v);

/// Type-erased interface consumed by training and evaluation.
class Domain {
 public:
  virtual ~Domain() = default;

  virtual const Schema& schema() const = 0;

  /// Random-action roll-out with the robot moving through all poses.
  /// `stratum` in [0, strata()) fixes the hidden variable; -1 draws it.
  virtual Trajectory training_episode(int id, int horizon, Rng& rng, int stratum = -1) const = 0;
  /// Number of values of the hidden variable used to counterbalance datasets;
  /// 1 when it is continuous.
  virtual int strata() const { return 1; }
  /// Scripted evaluation episode with the robot at its task pose.
  /// `variant` < 0 picks a random variant (see each domain for meanings).
  virtual Trajectory evaluation_episode(int id, int horizon, Rng& rng, int variant = -1) const = 0;
  virtual int variant_count() const = 0;

  virtual LabelSpace task_labels() const = 0;
  virtual LabelSpace view_labels() const = 0;
  /// c(y): the task quantity read from a task-complete observation.
  virtual Label label_task(const Frame& task) const = 0;
  /// c(x): what an ego observation shows of the hidden quantity.
  virtual Label label_view(const Frame& ego) const = 0;

  /// Exact posterior of a Bayes-rational observer given its own ego history
  /// and the actions it perceived (perceived[t] is the action between t and
  /// t+1). `confusion` is the likelihood assigned to an observation that
  /// contradicts a hypothesis; 0 means exact (contradictions throw).
  virtual GroundTruthBelief belief(const std::vector<Frame>& ego_history, const std::vector<int>& perceived,
                                   double confusion = 0.0) const = 0;
  /// Distribution over c(x^H_t) given the robot's information and the
  /// human's pose at t.
  virtual GroundTruthBelief view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                        const Vector& human_pose, double confusion = 0.0) const = 0;

  /// Action as perceived by an observer standing at `observer_pose` when it
  /// is executed; unseen actions read as no-op (id 0).
  virtual int perceived_action(int action, const Vector& observer_pose) const = 0;

  std::vector<int> perceived_by_human(const Trajectory& traj, int upto) const;
};

std::unique_ptr<Domain> make_domain(DomainId id);

/// Reproducible dataset of random-action roll-outs. Episode i draws from its
/// own stream derived from (seed, i); its hidden variable is stratum
/// i % Domain::strata(), so the data are balanced.
std::vector<Trajectory> generate_dataset(const Domain& domain, int count, int horizon, std::uint64_t seed);
std::vector<Trajectory> generate_evaluation_set(const Domain& domain, int count, int horizon, std::uint64_t seed,
                                                int variant = -1);
/// Evaluation set whose episode i uses variant i % Domain::variant_count().
std::vector<Trajectory> generate_balanced_evaluation_set(const Domain& domain, int count, int horizon,
                                                         std::uint64_t seed);

// ---- False-Belief -----------------------------------------------------------

enum class FbPose { Front = 0, Behind = 1, Away = 2 };

struct FalseBeliefState {
  int drill_side = 0;  // 0 = left, 1 = right
  bool switched = false;
  bool human_at_boxes = true;
  int step = 1;
};

class FalseBelief final : public Domain {
 public:
  enum Action { kNoop = 0, kSwitch = 1 };
  static constexpr int kHumanPresentSteps = 2;

  FalseBelief();
  const Schema& schema() const override { return schema_; }

  static FalseBeliefState initial_state(int drill_side);
  /// Throws ConfigError on an invalid action id.
  static FalseBeliefState step(const FalseBeliefState& s, int action);
  static Vector pose(FbPose p);
  static FbPose pose_class(const Vector& pose);
  static FbPose human_pose(const FalseBeliefState& s) { return s.human_at_boxes ? FbPose::Front : FbPose::Away; }

  Frame render_ego(const FalseBeliefState& s, FbPose pose) const;
  Frame render_task_complete(const FalseBeliefState& s) const;

  /// View classes: 0 nothing, 1 boxes, 2 boxes switched, 3 left, 4 left
  /// switched, 5 right, 6 right switched.
  int view_class(const Frame& ego) const;
  int view_class(const FalseBeliefState& s, FbPose pose) const;

  Trajectory training_episode(int id, int horizon, Rng& rng, int stratum = -1) const override;
  /// variant 0: no switch; 1: the robot switches once the human has left.
  Trajectory evaluation_episode(int id, int horizon, Rng& rng, int variant = -1) const override;
  int variant_count() const override { return 2; }
  int strata() const override { return 2; }

  LabelSpace task_labels() const override { return {2}; }
  LabelSpace view_labels() const override { return {7}; }
  Label label_task(const Frame& task) const override;
  Label label_view(const Frame& ego) const override;

  GroundTruthBelief belief(const std::vector<Frame>& ego_history, const std::vector<int>& perceived,
                           double confusion = 0.0) const override;
  GroundTruthBelief view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                const Vector& human_pose, double confusion = 0.0) const override;
  int perceived_action(int action, const Vector& observer_pose) const override;

  double switch_probability = 0.3;

 private:
  /// Posterior weight of each initial drill side and the implied state at the
  /// end of the history.
  std::array<double, 2> hypothesis_weights(const std::vector<Frame>& history, const std::vector<int>& actions,
                                           double confusion, std::array<FalseBeliefState, 2>& final_states) const;
  Trajectory roll_out(int id, const std::vector<int>& actions, const std::vector<FbPose>& robot_poses,
                      int drill_side) const;

  Schema schema_;
  std::vector<Vector> view_prototypes_;
};

// ---- Fetch-Tool ---------------------------------------------------------------

enum class FtPose { Screen = 0, Far = 1 };

struct FetchToolMessage {
  int color = -1;  // -1 when not part of the message
  int type = -1;
};

struct FetchToolState {
  int object_id = 0;  // color * 2 + type
  std::vector<FetchToolMessage> messages;
  int step = 1;

  int color() const { return object_id / 2; }
  int type() const { return object_id % 2; }
  int known_color() const;
  int known_type() const;
};

class FetchTool final : public Domain {
 public:
  enum Action { kNoop = 0, kQueryColor = 1, kQueryType = 2, kQueryBoth = 3 };
  static constexpr int kColors = 3;
  static constexpr int kTypes = 2;
  static constexpr int kObjects = kColors * kTypes;
  static const std::array<std::string, kColors> kColorNames;
  static const std::array<std::string, kTypes> kTypeNames;

  FetchTool();
  const Schema& schema() const override { return schema_; }

  static FetchToolState initial_state(int object_id);
  /// The scripted human answers the query truthfully at the queried level.
  static FetchToolState step(const FetchToolState& s, int action);
  static Vector pose(FtPose p);
  static FtPose pose_class(const Vector& pose);

  Frame render_ego(const FetchToolState& s, FtPose pose) const;
  Frame render_task_complete(const FetchToolState& s) const;
  /// Screen class: object id 0..5, or 6 when the screen is not visible.
  int screen_class(const Frame& ego) const;

  Trajectory training_episode(int id, int horizon, Rng& rng, int stratum = -1) const override;
  /// variant 0: color then type; 1: type then color; 2: both at once.
  Trajectory evaluation_episode(int id, int horizon, Rng& rng, int variant = -1) const override;
  Trajectory scripted_episode(int id, int horizon, int object_id, const std::vector<int>& actions) const;
  int variant_count() const override { return 3; }
  int strata() const override { return kObjects; }

  LabelSpace task_labels() const override { return {kObjects}; }
  LabelSpace view_labels() const override { return {kObjects + 1}; }
  Label label_task(const Frame& task) const override;
  Label label_view(const Frame& ego) const override;

  GroundTruthBelief belief(const std::vector<Frame>& ego_history, const std::vector<int>& perceived,
                           double confusion = 0.0) const override;
  GroundTruthBelief view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                const Vector& human_pose, double confusion = 0.0) const override;
  int perceived_action(int action, const Vector& observer_pose) const override;

 private:
  Vector object_weights(const std::vector<Frame>& history, double confusion) const;

  Schema schema_;
};

// ---- Table-Assembly -----------------------------------------------------------

struct TableAssemblyState {
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();  // hole minus peg, table lengths
  Vector robot_pose;
  Vector human_pose;
  bool occluded_for_human = true;
  int step = 1;
};

class TableAssembly final : public Domain {
 public:
  enum Action { kNoop = 0, kPlusX = 1, kMinusX = 2, kPlusY = 3, kMinusY = 4 };
  static constexpr int kRingPositions = 8;
  static constexpr int kRobotTaskPose = 5;
  static constexpr double kMoveStep = 0.1;
  static constexpr double kInitialHalfWidth = 0.5;
  static constexpr int kGridCells = 5;
  static constexpr double kCellWidth = 2.0 / kGridCells;

  TableAssembly();
  const Schema& schema() const override { return schema_; }

  static Vector ring_pose(int index);
  /// The hole is visible from the front half-plane (y > 0).
  static bool hole_visible_from(const Vector& pose);
  static Eigen::Vector2d move_of(int action);
  static int cell_index(double v);
  static double cell_center(int index);

  static TableAssemblyState initial_state(const Eigen::Vector2d& offset, const Vector& robot_pose,
                                          const Vector& human_pose);
  /// Moving the table by d changes the offset by -d; clamped to [-1, 1]^2.
  static TableAssemblyState step(const TableAssemblyState& s, int action);

  /// Noise-free rendering; view = [occluded, ox, oy],
  /// message = [has_cell, cell_x, cell_y, cannot_see].
  Frame render_ego(const TableAssemblyState& s, const Vector& pose) const;
  Frame render_task_complete(const TableAssemblyState& s) const;

  Trajectory training_episode(int id, int horizon, Rng& rng, int stratum = -1) const override;
  /// variant 0: human view occluded; 1: human sees the hole.
  Trajectory evaluation_episode(int id, int horizon, Rng& rng, int variant = -1) const override;
  int variant_count() const override { return 2; }

  LabelSpace task_labels() const override { return {0}; }
  LabelSpace view_labels() const override { return {0}; }
  Label label_task(const Frame& task) const override;
  Label label_view(const Frame& ego) const override;

  GroundTruthBelief belief(const std::vector<Frame>& ego_history, const std::vector<int>& perceived,
                           double confusion = 0.0) const override;
  GroundTruthBelief view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                const Vector& human_pose, double confusion = 0.0) const override;
  int perceived_action(int action, const Vector& observer_pose) const override;

  /// Prior over the current offset given only the displacement so far.
  static GaussianBelief prior_belief(const Eigen::Vector2d& displacement);

 private:
  Trajectory roll_out(int id, const std::vector<int>& actions, const std::vector<Vector>& robot_poses,
                      const Vector& human_pose, const Eigen::Vector2d& offset, Rng& rng) const;
  std::vector<int> random_actions(int horizon, Rng& rng) const;

  Schema schema_;
};

// ---- dataset file -------------------------------------------------------------

struct DatasetHeader {
  std::string domain;
  int version = 1;
  int horizon = 0;
  int count = 0;
  std::vector<Modality> ego;
  std::vector<Modality> task;
  int action_dim = 0;
  int pose_dim = 0;
};

/// Newline-delimited JSON: a header line followed by one record per step.
void write_dataset(const std::filesystem::path& path, const Schema& schema, const std::vector<Trajectory>& data);
std::vector<Trajectory> read_dataset(const std::filesystem::path& path, DatasetHeader* header = nullptr);
/// Throws ConfigError when the header does not describe `schema`.
void check_schema(const DatasetHeader& header, const Schema& schema);

}  // namespace leapt
