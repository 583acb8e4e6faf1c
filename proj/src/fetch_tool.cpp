#include "leapt/envs.hpp"

namespace leapt {

namespace {

constexpr int kMessageDim = FetchTool::kColors + FetchTool::kTypes;

Vector one_hot(int k, int n) {
  Vector v = Vector::Zero(n);
  if (k >= 0) v[k] = 1.0;
  return v;
}

/// Index of the hot channel, or -1 when no channel exceeds one half.
int read_one_hot(const Vector& v) {
  Index best = 0;
  double m = v.maxCoeff(&best);
  return m > 0.5 ? static_cast<int>(best) : -1;
}

}  // namespace

const std::array<std::string, FetchTool::kColors> FetchTool::kColorNames = {"brown", "white", "gray"};
const std::array<std::string, FetchTool::kTypes> FetchTool::kTypeNames = {"table", "cabinet"};

int FetchToolState::known_color() const {
  for (const auto& m : messages)
    if (m.color >= 0) return m.color;
  return -1;
}

int FetchToolState::known_type() const {
  for (const auto& m : messages)
    if (m.type >= 0) return m.type;
  return -1;
}

FetchTool::FetchTool() {
  schema_.id = DomainId::FetchTool;
  schema_.name = "fetch-tool";
  schema_.ego = {{"pose", 4}, {"screen", kObjects + 1}, {"messages", kMessageDim}};
  schema_.task = {{"object", kObjects}, {"messages", kMessageDim}};
  schema_.actions = {"noop", "query_color", "query_type", "query_both"};
  schema_.horizon = 5;
  schema_.train_trajectories = 100;
  schema_.epochs = 400;
}

FetchToolState FetchTool::initial_state(int object_id) {
  if (object_id < 0 || object_id >= kObjects) throw ConfigError("fetch-tool: object id out of range");
  FetchToolState s;
  s.object_id = object_id;
  return s;
}

FetchToolState FetchTool::step(const FetchToolState& s, int action) {
  FetchToolState next = s;
  next.step = s.step + 1;
  switch (action) {
    case kNoop: break;
    case kQueryColor: next.messages.push_back({s.color(), -1}); break;
    case kQueryType: next.messages.push_back({-1, s.type()}); break;
    case kQueryBoth: next.messages.push_back({s.color(), s.type()}); break;
    default: throw ConfigError("fetch-tool: invalid action " + std::to_string(action));
  }
  return next;
}

Vector FetchTool::pose(FtPose p) {
  return p == FtPose::Screen ? pose_facing_origin(0.0, 1.0) : pose_facing_origin(0.0, -3.0);
}

FtPose FetchTool::pose_class(const Vector& p) {
  static const std::vector<Vector> poses = {pose(FtPose::Screen), pose(FtPose::Far)};
  return static_cast<FtPose>(nearest_row(poses, p));
}

Frame FetchTool::render_ego(const FetchToolState& s, FtPose p) const {
  // One-hot object followed by a visibility bit; all zero when off screen.
  Vector screen = Vector::Zero(kObjects + 1);
  if (p == FtPose::Screen) screen << one_hot(s.object_id, kObjects), 1.0;
  Vector messages(kMessageDim);
  messages << one_hot(s.known_color(), kColors), one_hot(s.known_type(), kTypes);
  return {pose(p), screen, messages};
}

Frame FetchTool::render_task_complete(const FetchToolState& s) const {
  Vector messages(kMessageDim);
  messages << one_hot(s.known_color(), kColors), one_hot(s.known_type(), kTypes);
  return {one_hot(s.object_id, kObjects), messages};
}

int FetchTool::screen_class(const Frame& ego) const {
  static const std::vector<Vector> prototypes = [] {
    std::vector<Vector> out;
    for (int o = 0; o < kObjects; ++o) {
      Vector v(kObjects + 1);
      v << one_hot(o, kObjects), 1.0;
      out.push_back(v);
    }
    out.push_back(Vector::Zero(kObjects + 1));
    return out;
  }();
  return nearest_row(prototypes, ego.at(1));
}

Trajectory FetchTool::scripted_episode(int id, int horizon, int object_id, const std::vector<int>& actions) const {
  Trajectory traj;
  traj.episode = id;
  FetchToolState s = initial_state(object_id);
  for (int t = 0; t < horizon; ++t) {
    int a = t < static_cast<int>(actions.size()) ? actions[t] : kNoop;
    Step st;
    st.ego = render_ego(s, FtPose::Far);
    st.task = render_task_complete(s);
    st.action = Vector::Zero(schema_.action_dim());
    if (t + 1 < horizon) st.action[a] = 1.0;
    st.robot_pose = pose(FtPose::Far);
    st.human_pose = pose(FtPose::Screen);
    st.human_ego = render_ego(s, FtPose::Screen);
    traj.steps.push_back(std::move(st));
    if (t + 1 < horizon) s = step(s, a);
  }
  return traj;
}

Trajectory FetchTool::training_episode(int id, int horizon, Rng& rng, int stratum) const {
  Trajectory traj;
  traj.episode = id;
  FetchToolState s = initial_state(stratum >= 0 ? stratum % kObjects : uniform_int(rng, 0, kObjects - 1));
  for (int t = 0; t < horizon; ++t) {
    FtPose p = static_cast<FtPose>(uniform_int(rng, 0, 1));
    int a = t + 1 < horizon ? uniform_int(rng, 0, 3) : kNoop;
    Step st;
    st.ego = render_ego(s, p);
    st.task = render_task_complete(s);
    st.action = Vector::Zero(schema_.action_dim());
    if (t + 1 < horizon) st.action[a] = 1.0;
    st.robot_pose = pose(p);
    st.human_pose = pose(FtPose::Screen);
    st.human_ego = render_ego(s, FtPose::Screen);
    traj.steps.push_back(std::move(st));
    if (t + 1 < horizon) s = step(s, a);
  }
  return traj;
}

Trajectory FetchTool::evaluation_episode(int id, int horizon, Rng& rng, int variant) const {
  if (variant < 0) variant = uniform_int(rng, 0, 2);
  std::vector<int> actions;
  switch (variant) {
    case 0: actions = {kQueryColor, kQueryType}; break;
    case 1: actions = {kQueryType, kQueryColor}; break;
    case 2: actions = {kQueryBoth}; break;
    default: throw ConfigError("fetch-tool: variant must be 0, 1 or 2");
  }
  return scripted_episode(id, horizon, uniform_int(rng, 0, kObjects - 1), actions);
}

Label FetchTool::label_task(const Frame& task) const {
  static const std::vector<Vector> prototypes = [] {
    std::vector<Vector> out;
    for (int o = 0; o < kObjects; ++o) out.push_back(one_hot(o, kObjects));
    return out;
  }();
  return nearest_row(prototypes, task.at(0));
}

Label FetchTool::label_view(const Frame& ego) const { return screen_class(ego); }

Vector FetchTool::object_weights(const std::vector<Frame>& history, double confusion) const {
  if (history.empty()) throw ConfigError("fetch-tool oracle: empty history");
  Vector w = Vector::Constant(kObjects, 1.0 / kObjects);
  for (const Frame& f : history) {
    int seen = screen_class(f);
    bool at_screen = pose_class(f.at(0)) == FtPose::Screen;
    int color = read_one_hot(f.at(2).head(kColors));
    int type = read_one_hot(f.at(2).tail(kTypes));
    for (int o = 0; o < kObjects; ++o) {
      int expected = at_screen ? o : kObjects;
      if (seen != expected) w[o] *= confusion;
      if (color >= 0 && color != o / kTypes) w[o] *= confusion;
      if (type >= 0 && type != o % kTypes) w[o] *= confusion;
    }
  }
  double z = w.sum();
  if (z <= 0.0) throw InconsistentHistory("fetch-tool oracle: no object is consistent with the observations");
  return w / z;
}

GroundTruthBelief FetchTool::belief(const std::vector<Frame>& history, const std::vector<int>&, double confusion) const {
  return CategoricalDist(object_weights(history, confusion));
}

GroundTruthBelief FetchTool::view_belief(const std::vector<Frame>& robot_history, const std::vector<int>&,
                                         const Vector& human_pose, double confusion) const {
  Vector w = object_weights(robot_history, confusion);
  Vector p = Vector::Zero(kObjects + 1);
  if (pose_class(human_pose) == FtPose::Screen)
    p.head(kObjects) = w;
  else
    p[kObjects] = 1.0;
  return CategoricalDist(p);
}

int FetchTool::perceived_action(int action, const Vector&) const { return action; }

}  // namespace leapt
