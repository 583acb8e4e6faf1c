#include "leapt/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace leapt {

namespace {

constexpr double kPriorVariance = (2.0 * TableAssembly::kInitialHalfWidth) * (2.0 * TableAssembly::kInitialHalfWidth) / 12.0;

Vector message_channels(const TableAssemblyState& s) {
  Vector m = Vector::Zero(4);
  if (s.occluded_for_human) {
    m[3] = 1.0;
  } else {
    m[0] = 1.0;
    m[1] = TableAssembly::cell_center(TableAssembly::cell_index(s.offset.x()));
    m[2] = TableAssembly::cell_center(TableAssembly::cell_index(s.offset.y()));
  }
  return m;
}

}  // namespace

TableAssembly::TableAssembly() {
  schema_.id = DomainId::TableAssembly;
  schema_.name = "table-assembly";
  schema_.ego = {{"pose", 4}, {"view", 3}, {"message", 4}};
  schema_.task = {{"offset", 2}, {"message", 4}};
  schema_.actions = {"noop", "+x", "-x", "+y", "-y"};
  schema_.horizon = 10;
  schema_.train_trajectories = 300;
  schema_.epochs = 700;
  schema_.obs_std = 0.03;
  schema_.chain_weight = 0.0;
}

Vector TableAssembly::ring_pose(int index) {
  if (index < 0 || index >= kRingPositions) throw ConfigError("table-assembly: ring index out of range");
  double angle = (22.5 + 45.0 * index) * std::numbers::pi / 180.0;
  return pose_facing_origin(2.0 * std::cos(angle), 2.0 * std::sin(angle));
}

bool TableAssembly::hole_visible_from(const Vector& pose) { return pose[1] > 0.0; }

Eigen::Vector2d TableAssembly::move_of(int action) {
  switch (action) {
    case kNoop: return {0.0, 0.0};
    case kPlusX: return {kMoveStep, 0.0};
    case kMinusX: return {-kMoveStep, 0.0};
    case kPlusY: return {0.0, kMoveStep};
    case kMinusY: return {0.0, -kMoveStep};
    default: throw ConfigError("table-assembly: invalid action " + std::to_string(action));
  }
}

int TableAssembly::cell_index(double v) {
  return std::clamp(static_cast<int>(std::floor((v + 1.0) / kCellWidth)), 0, kGridCells - 1);
}

double TableAssembly::cell_center(int index) { return -1.0 + kCellWidth * (index + 0.5); }

TableAssemblyState TableAssembly::initial_state(const Eigen::Vector2d& offset, const Vector& robot_pose,
                                                const Vector& human_pose) {
  TableAssemblyState s;
  s.offset = offset.cwiseMax(-1.0).cwiseMin(1.0);
  s.robot_pose = robot_pose;
  s.human_pose = human_pose;
  s.occluded_for_human = !hole_visible_from(human_pose);
  return s;
}

TableAssemblyState TableAssembly::step(const TableAssemblyState& s, int action) {
  TableAssemblyState next = s;
  next.offset = (s.offset - move_of(action)).cwiseMax(-1.0).cwiseMin(1.0);
  next.step = s.step + 1;
  return next;
}

Frame TableAssembly::render_ego(const TableAssemblyState& s, const Vector& pose) const {
  Vector view = Vector::Zero(3);
  if (hole_visible_from(pose)) {
    view[1] = s.offset.x();
    view[2] = s.offset.y();
  } else {
    view[0] = 1.0;
  }
  return {pose, view, message_channels(s)};
}

Frame TableAssembly::render_task_complete(const TableAssemblyState& s) const {
  return {Vector(s.offset), message_channels(s)};
}

std::vector<int> TableAssembly::random_actions(int horizon, Rng& rng) const {
  std::vector<int> actions(horizon, kNoop);
  Eigen::Vector2d displacement = Eigen::Vector2d::Zero();
  for (int t = 0; t + 1 < horizon; ++t) {
    int a = uniform_int(rng, 0, 4);
    Eigen::Vector2d d = displacement + move_of(a);
    if (d.cwiseAbs().maxCoeff() > kInitialHalfWidth + 1e-9) a = kNoop;
    displacement += move_of(a);
    actions[t] = a;
  }
  return actions;
}

Trajectory TableAssembly::roll_out(int id, const std::vector<int>& actions, const std::vector<Vector>& robot_poses,
                                   const Vector& human_pose, const Eigen::Vector2d& offset, Rng& rng) const {
  Trajectory traj;
  traj.episode = id;
  const int horizon = static_cast<int>(robot_poses.size());
  TableAssemblyState s = initial_state(offset, robot_poses.front(), human_pose);
  auto noisy_view = [&](Frame f) {
    if (f[1][0] < 0.5) f[1].tail(2) += kObservationNoise * standard_normal(2, 1, rng);
    return f;
  };
  for (int t = 0; t < horizon; ++t) {
    s.robot_pose = robot_poses[t];
    Step st;
    st.ego = noisy_view(render_ego(s, robot_poses[t]));
    st.task = render_task_complete(s);
    st.task[0] += kObservationNoise * standard_normal(2, 1, rng);
    st.action = Vector::Zero(schema_.action_dim());
    if (t + 1 < horizon) st.action[actions[t]] = 1.0;
    st.robot_pose = robot_poses[t];
    st.human_pose = human_pose;
    st.human_ego = noisy_view(render_ego(s, human_pose));
    traj.steps.push_back(std::move(st));
    if (t + 1 < horizon) s = step(s, actions[t]);
  }
  return traj;
}

Trajectory TableAssembly::training_episode(int id, int horizon, Rng& rng, int) const {
  Eigen::Vector2d offset(uniform(rng, -kInitialHalfWidth, kInitialHalfWidth),
                         uniform(rng, -kInitialHalfWidth, kInitialHalfWidth));
  Vector human = ring_pose(uniform_int(rng, 0, kRingPositions - 1));
  std::vector<Vector> robot(horizon);
  for (auto& p : robot) p = ring_pose(uniform_int(rng, 0, kRingPositions - 1));
  std::vector<int> actions = random_actions(horizon, rng);
  return roll_out(id, actions, robot, human, offset, rng);
}

Trajectory TableAssembly::evaluation_episode(int id, int horizon, Rng& rng, int variant) const {
  if (variant < 0) variant = uniform_int(rng, 0, 1);
  if (variant > 1) throw ConfigError("table-assembly: variant must be 0 or 1");
  Eigen::Vector2d offset(uniform(rng, -kInitialHalfWidth, kInitialHalfWidth),
                         uniform(rng, -kInitialHalfWidth, kInitialHalfWidth));
  // Ring positions 0..3 see the hole, 4..7 do not.
  Vector human = ring_pose(variant == 1 ? uniform_int(rng, 0, 3) : uniform_int(rng, 4, 7));
  std::vector<int> actions = random_actions(horizon, rng);
  return roll_out(id, actions, std::vector<Vector>(horizon, ring_pose(kRobotTaskPose)), human, offset, rng);
}

Label TableAssembly::label_task(const Frame& task) const { return Eigen::Vector2d(task.at(0)[0], task.at(0)[1]); }

Label TableAssembly::label_view(const Frame& ego) const {
  const Vector& v = ego.at(1);
  if (v[0] >= 0.5) return Eigen::Vector2d::Zero().eval();
  return Eigen::Vector2d(v[1], v[2]);
}

GaussianBelief TableAssembly::prior_belief(const Eigen::Vector2d& displacement) {
  return {-displacement, Eigen::Vector2d::Constant(kPriorVariance)};
}

GroundTruthBelief TableAssembly::belief(const std::vector<Frame>& history, const std::vector<int>& perceived,
                                        double confusion) const {
  if (history.empty()) throw ConfigError("table-assembly oracle: empty history");
  // displacement[t] is the total table motion before step t; the offset at
  // step t is o_0 - displacement[t].
  std::vector<Eigen::Vector2d> displacement(history.size(), Eigen::Vector2d::Zero());
  for (std::size_t t = 1; t < history.size(); ++t) {
    int a = t - 1 < perceived.size() && perceived[t - 1] >= 0 ? perceived[t - 1] : kNoop;
    displacement[t] = displacement[t - 1] + move_of(a);
  }
  const Eigen::Vector2d current = displacement.back();

  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (std::size_t t = 0; t < history.size(); ++t) {
    const Vector& view = history[t].at(1);
    if (view[0] < 0.5) {
      sum += Eigen::Vector2d(view[1], view[2]) + displacement[t];
      ++n;
    }
  }
  if (n > 0) {
    double var = std::max(kObservationNoise * kObservationNoise / n, kBeliefVarianceFloor);
    return GaussianBelief{sum / n - current, Eigen::Vector2d::Constant(var)};
  }

  Eigen::Vector2d lo = Eigen::Vector2d::Constant(-kInitialHalfWidth);
  Eigen::Vector2d hi = Eigen::Vector2d::Constant(kInitialHalfWidth);
  for (std::size_t t = 0; t < history.size(); ++t) {
    const Vector& msg = history[t].at(2);
    if (msg[0] < 0.5) continue;
    Eigen::Vector2d c(msg[1], msg[2]);
    Eigen::Vector2d cell_lo = c.array() - 0.5 * kCellWidth + displacement[t].array();
    Eigen::Vector2d cell_hi = c.array() + 0.5 * kCellWidth + displacement[t].array();
    Eigen::Vector2d new_lo = lo.cwiseMax(cell_lo), new_hi = hi.cwiseMin(cell_hi);
    if ((new_lo.array() > new_hi.array()).any()) {
      if (confusion > 0.0) continue;
      throw InconsistentHistory("table-assembly oracle: messages contradict each other");
    }
    lo = new_lo;
    hi = new_hi;
  }
  Eigen::Vector2d width = hi - lo;
  Eigen::Vector2d var = (width.array().square() / 12.0).cwiseMax(kBeliefVarianceFloor);
  return GaussianBelief{0.5 * (lo + hi) - current, var};
}

GroundTruthBelief TableAssembly::view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                             const Vector& human_pose, double confusion) const {
  if (!hole_visible_from(human_pose))
    return GaussianBelief{Eigen::Vector2d::Zero(), Eigen::Vector2d::Constant(kBeliefVarianceFloor)};
  return belief(robot_history, actions, confusion);
}

int TableAssembly::perceived_action(int action, const Vector&) const { return action; }

}  // namespace leapt
