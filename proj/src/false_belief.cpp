#include "leapt/envs.hpp"

namespace leapt {

namespace {

constexpr int kViewDim = 4;  // drill_left, drill_right, boxes_visible, switched

Vector one_hot(int k, int n) {
  Vector v = Vector::Zero(n);
  v[k] = 1.0;
  return v;
}

}  // namespace

FalseBelief::FalseBelief() {
  schema_.id = DomainId::FalseBelief;
  schema_.name = "false-belief";
  schema_.ego = {{"pose", 4}, {"view", kViewDim}};
  schema_.task = {{"drill", 2}, {"boxes", 1}};
  schema_.actions = {"noop", "switch"};
  schema_.horizon = 5;
  schema_.train_trajectories = 30;
  schema_.epochs = 2000;
  schema_.batch_size = 0;
  schema_.learning_rate = 3e-3;
  schema_.obs_std = 0.05;
  schema_.chain_weight = 0.0;

  for (int c = 0; c < 7; ++c) {
    Vector v = Vector::Zero(kViewDim);
    if (c >= 1) v[2] = 1.0;
    if (c == 2 || c == 4 || c == 6) v[3] = 1.0;
    if (c == 3 || c == 4) v[0] = 1.0;
    if (c == 5 || c == 6) v[1] = 1.0;
    view_prototypes_.push_back(v);
  }
}

FalseBeliefState FalseBelief::initial_state(int drill_side) {
  if (drill_side != 0 && drill_side != 1) throw ConfigError("false-belief: drill side must be 0 or 1");
  FalseBeliefState s;
  s.drill_side = drill_side;
  return s;
}

FalseBeliefState FalseBelief::step(const FalseBeliefState& s, int action) {
  if (action != kNoop && action != kSwitch) throw ConfigError("false-belief: invalid action " + std::to_string(action));
  FalseBeliefState next = s;
  next.step = s.step + 1;
  next.human_at_boxes = next.step <= kHumanPresentSteps;
  if (action == kSwitch && !next.human_at_boxes && !s.switched) {
    next.drill_side = 1 - s.drill_side;
    next.switched = true;
  }
  return next;
}

Vector FalseBelief::pose(FbPose p) {
  switch (p) {
    case FbPose::Front: return pose_facing_origin(0.0, 1.0);
    case FbPose::Behind: return pose_facing_origin(0.0, -1.0);
    case FbPose::Away: return pose_facing_origin(3.0, 0.0);
  }
  throw ConfigError("false-belief: invalid pose");
}

FbPose FalseBelief::pose_class(const Vector& p) {
  static const std::vector<Vector> poses = {pose(FbPose::Front), pose(FbPose::Behind), pose(FbPose::Away)};
  return static_cast<FbPose>(nearest_row(poses, p));
}

Frame FalseBelief::render_ego(const FalseBeliefState& s, FbPose p) const {
  Vector view = Vector::Zero(kViewDim);
  if (p != FbPose::Away) {
    view[2] = 1.0;
    view[3] = s.switched ? 1.0 : 0.0;
  }
  if (p == FbPose::Front) view[s.drill_side] = 1.0;
  return {pose(p), view};
}

Frame FalseBelief::render_task_complete(const FalseBeliefState& s) const {
  Vector boxes(1);
  boxes[0] = s.switched ? 1.0 : 0.0;
  return {one_hot(s.drill_side, 2), boxes};
}

int FalseBelief::view_class(const Frame& ego) const { return nearest_row(view_prototypes_, ego.at(1)); }

int FalseBelief::view_class(const FalseBeliefState& s, FbPose p) const { return view_class(render_ego(s, p)); }

Trajectory FalseBelief::roll_out(int id, const std::vector<int>& actions, const std::vector<FbPose>& robot_poses,
                                 int drill_side) const {
  Trajectory traj;
  traj.episode = id;
  FalseBeliefState s = initial_state(drill_side);
  const int horizon = static_cast<int>(robot_poses.size());
  for (int t = 0; t < horizon; ++t) {
    Step st;
    st.ego = render_ego(s, robot_poses[t]);
    st.task = render_task_complete(s);
    st.action = Vector::Zero(schema_.action_dim());
    if (t + 1 < horizon) st.action[actions[t]] = 1.0;
    st.robot_pose = pose(robot_poses[t]);
    st.human_pose = pose(human_pose(s));
    st.human_ego = render_ego(s, human_pose(s));
    traj.steps.push_back(std::move(st));
    if (t + 1 < horizon) s = step(s, actions[t]);
  }
  return traj;
}

Trajectory FalseBelief::training_episode(int id, int horizon, Rng& rng, int stratum) const {
  int side = stratum >= 0 ? stratum % 2 : uniform_int(rng, 0, 1);
  std::vector<int> actions(horizon, kNoop);
  std::vector<FbPose> poses(horizon);
  for (int t = 0; t < horizon; ++t) {
    poses[t] = static_cast<FbPose>(uniform_int(rng, 0, 2));
    if (t + 1 < horizon && uniform(rng) < switch_probability) actions[t] = kSwitch;
  }
  return roll_out(id, actions, poses, side);
}

Trajectory FalseBelief::evaluation_episode(int id, int horizon, Rng& rng, int variant) const {
  if (variant < 0) variant = uniform_int(rng, 0, 1);
  if (variant > 1) throw ConfigError("false-belief: variant must be 0 or 1");
  int side = uniform_int(rng, 0, 1);
  std::vector<int> actions(horizon, kNoop);
  // The first step at which a switch goes unseen is the transition into
  // the first step with the human away.
  if (variant == 1 && horizon > kHumanPresentSteps) actions[kHumanPresentSteps - 1] = kSwitch;
  return roll_out(id, actions, std::vector<FbPose>(horizon, FbPose::Behind), side);
}

Label FalseBelief::label_task(const Frame& task) const {
  static const std::vector<Vector> sides = {one_hot(0, 2), one_hot(1, 2)};
  return nearest_row(sides, task.at(0));
}

Label FalseBelief::label_view(const Frame& ego) const { return view_class(ego); }

std::array<double, 2> FalseBelief::hypothesis_weights(const std::vector<Frame>& history, const std::vector<int>& actions,
                                                      double confusion,
                                                      std::array<FalseBeliefState, 2>& final_states) const {
  if (history.empty()) throw ConfigError("false-belief oracle: empty history");
  std::array<double, 2> w{0.5, 0.5};
  for (int side = 0; side < 2; ++side) {
    FalseBeliefState s = initial_state(side);
    for (std::size_t t = 0; t < history.size(); ++t) {
      if (view_class(s, pose_class(history[t].at(0))) != view_class(history[t])) w[side] *= confusion;
      if (t + 1 < history.size()) {
        int a = t < actions.size() && actions[t] >= 0 ? actions[t] : kNoop;
        s = step(s, a);
      }
    }
    final_states[side] = s;
  }
  double z = w[0] + w[1];
  if (z <= 0.0) throw InconsistentHistory("false-belief oracle: no drill side explains the observations");
  return {w[0] / z, w[1] / z};
}

GroundTruthBelief FalseBelief::belief(const std::vector<Frame>& history, const std::vector<int>& perceived,
                                      double confusion) const {
  std::array<FalseBeliefState, 2> finals;
  auto w = hypothesis_weights(history, perceived, confusion, finals);
  double p_left = 0.0;
  for (int side = 0; side < 2; ++side)
    if (finals[side].drill_side == 0) p_left += w[side];
  return BernoulliDist(std::clamp(p_left, 0.0, 1.0));
}

GroundTruthBelief FalseBelief::view_belief(const std::vector<Frame>& robot_history, const std::vector<int>& actions,
                                           const Vector& human_pose, double confusion) const {
  std::array<FalseBeliefState, 2> finals;
  auto w = hypothesis_weights(robot_history, actions, confusion, finals);
  Vector p = Vector::Zero(7);
  for (int side = 0; side < 2; ++side) p[view_class(finals[side], pose_class(human_pose))] += w[side];
  return CategoricalDist(p / p.sum());
}

int FalseBelief::perceived_action(int action, const Vector& observer_pose) const {
  return pose_class(observer_pose) == FbPose::Away ? kNoop : action;
}

}  // namespace leapt
