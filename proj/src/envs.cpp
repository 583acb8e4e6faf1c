#include "leapt/envs.hpp"

#include <cmath>
#include <limits>

namespace leapt {

std::string to_string(DomainId id) {
  switch (id) {
    case DomainId::FalseBelief: return "false-belief";
    case DomainId::FetchTool: return "fetch-tool";
    case DomainId::TableAssembly: return "table-assembly";
  }
  return "unknown";
}

DomainId parse_domain(const std::string& name) {
  if (name == "false-belief") return DomainId::FalseBelief;
  if (name == "fetch-tool") return DomainId::FetchTool;
  if (name == "table-assembly") return DomainId::TableAssembly;
  throw ConfigError("unknown domain '" + name + "' (expected false-belief, fetch-tool or table-assembly)");
}

namespace {
int total_dim(const std::vector<Modality>& ms) {
  int d = 0;
  for (const auto& m : ms) d += m.dim;
  return d;
}
}  // namespace

int Schema::ego_dim() const { return total_dim(ego); }
int Schema::task_dim() const { return total_dim(task); }

Vector concat(const Frame& frame) {
  Index n = 0;
  for (const auto& v : frame) n += v.size();
  Vector out(n);
  Index at = 0;
  for (const auto& v : frame) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

Frame split(const Vector& flat, const std::vector<Modality>& modalities) {
  if (flat.size() != total_dim(modalities)) throw ConfigError("split: dimension mismatch");
  Frame out;
  Index at = 0;
  for (const auto& m : modalities) {
    out.push_back(flat.segment(at, m.dim));
    at += m.dim;
  }
  return out;
}

std::vector<int> Trajectory::action_ids() const {
  std::vector<int> out;
  for (int t = 0; t + 1 < length(); ++t) {
    const Vector& a = steps[t].action;
    Index best = -1;
    if (a.size() > 0 && a.maxCoeff(&best) <= 0.0) best = -1;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

Vector pose_facing_origin(double x, double y) {
  double heading = std::atan2(-y, -x);
  Vector p(4);
  p << x, y, std::cos(heading), std::sin(heading);
  return p;
}

int nearest_row(const std::vector<Vector>& prototypes, const Vector& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    double d = (prototypes[i] - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> Domain::perceived_by_human(const Trajectory& traj, int upto) const {
  std::vector<int> actions = traj.action_ids();
  std::vector<int> out;
  for (int t = 0; t + 1 < upto && t < static_cast<int>(actions.size()); ++t) {
    int a = actions[t] < 0 ? 0 : actions[t];
    out.push_back(perceived_action(a, traj.steps[t + 1].human_pose));
  }
  return out;
}

std::unique_ptr<Domain> make_domain(DomainId id) {
  switch (id) {
    case DomainId::FalseBelief: return std::make_unique<FalseBelief>();
    case DomainId::FetchTool: return std::make_unique<FetchTool>();
    case DomainId::TableAssembly: return std::make_unique<TableAssembly>();
  }
  throw ConfigError("make_domain: unknown domain");
}

std::vector<Trajectory> generate_dataset(const Domain& domain, int count, int horizon, std::uint64_t seed) {
  if (count < 0 || horizon < 1) throw ConfigError("generate_dataset: count must be >= 0 and horizon >= 1");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  const int group = domain.strata();
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(i));
    out.push_back(domain.training_episode(i, horizon, rng, group > 1 ? i % group : -1));
  }
  return out;
}

std::vector<Trajectory> generate_evaluation_set(const Domain& domain, int count, int horizon, std::uint64_t seed,
                                                int variant) {
  if (count < 0 || horizon < 1) throw ConfigError("generate_evaluation_set: count must be >= 0 and horizon >= 1");
  std::vector<Trajectory> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i));
    out.push_back(domain.evaluation_episode(i, horizon, rng, variant));
  }
  return out;
}

std::vector<Trajectory> generate_balanced_evaluation_set(const Domain& domain, int count, int horizon,
                                                         std::uint64_t seed) {
  if (count < 0 || horizon < 1) throw ConfigError("generate_evaluation_set: count must be >= 0 and horizon >= 1");
  std::vector<Trajectory> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i));
    out.push_back(domain.evaluation_episode(i, horizon, rng, i % domain.variant_count()));
  }
  return out;
}

}  // namespace leapt
