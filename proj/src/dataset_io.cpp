#include "leapt/envs.hpp"

#include <json.hpp>

#include <fstream>

namespace leapt {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "leapt-dataset";
constexpr int kVersion = 1;

json modalities_json(const std::vector<Modality>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back({{"name", m.name}, {"dim", m.dim}});
  return out;
}

std::vector<Modality> modalities_from(const json& j) {
  std::vector<Modality> out;
  for (const auto& m : j) out.push_back({m.at("name").get<std::string>(), m.at("dim").get<int>()});
  return out;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
  auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));
}

json frame_json(const Frame& f, const std::vector<Modality>& ms) {
  json out = json::object();
  for (std::size_t i = 0; i < ms.size(); ++i) out[ms[i].name] = vec_json(f.at(i));
  return out;
}

Frame frame_from(const json& j, const std::vector<Modality>& ms) {
  Frame out;
  for (const auto& m : ms) {
    Vector v = vec_from(j.at(m.name));
    if (v.size() != m.dim) throw ConfigError("dataset: modality '" + m.name + "' has wrong dimension");
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Schema& schema, const std::vector<Trajectory>& data) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("dataset: cannot write " + path.string());
  json header = {{"format", kFormat},
                 {"version", kVersion},
                 {"domain", schema.name},
                 {"horizon", data.empty() ? schema.horizon : data.front().length()},
                 {"count", data.size()},
                 {"ego", modalities_json(schema.ego)},
                 {"task", modalities_json(schema.task)},
                 {"action_dim", schema.action_dim()},
                 {"pose_dim", schema.pose_dim}};
  os << header.dump() << '\n';
  for (const auto& traj : data) {
    for (int t = 0; t < traj.length(); ++t) {
      const Step& s = traj.steps[t];
      json rec = {{"episode", traj.episode},
                  {"step", t},
                  {"ego", frame_json(s.ego, schema.ego)},
                  {"task", frame_json(s.task, schema.task)},
                  {"action", vec_json(s.action)},
                  {"robot_pose", vec_json(s.robot_pose)},
                  {"human_pose", vec_json(s.human_pose)}};
      if (!s.human_ego.empty()) rec["human_ego"] = frame_json(s.human_ego, schema.ego);
      os << rec.dump() << '\n';
    }
  }
  if (!os) throw ConfigError("dataset: write failed for " + path.string());
}

std::vector<Trajectory> read_dataset(const std::filesystem::path& path, DatasetHeader* header_out) {
  std::ifstream is(path);
  if (!is) throw ConfigError("dataset: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset: missing header in " + path.string());
  DatasetHeader header;
  try {
    json h = json::parse(line);
    if (h.at("format") != kFormat) throw ConfigError("dataset: not a dataset file");
    header.version = h.at("version").get<int>();
    if (header.version != kVersion) throw ConfigError("dataset: unsupported version " + std::to_string(header.version));
    header.domain = h.at("domain").get<std::string>();
    header.horizon = h.at("horizon").get<int>();
    header.count = h.at("count").get<int>();
    header.ego = modalities_from(h.at("ego"));
    header.task = modalities_from(h.at("task"));
    header.action_dim = h.at("action_dim").get<int>();
    header.pose_dim = h.at("pose_dim").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: malformed header: ") + e.what());
  }

  std::vector<Trajectory> out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json rec = json::parse(line);
      int episode = rec.at("episode").get<int>();
      if (out.empty() || out.back().episode != episode) {
        out.emplace_back();
        out.back().episode = episode;
      }
      Step s;
      s.ego = frame_from(rec.at("ego"), header.ego);
      s.task = frame_from(rec.at("task"), header.task);
      s.action = vec_from(rec.at("action"));
      s.robot_pose = vec_from(rec.at("robot_pose"));
      s.human_pose = vec_from(rec.at("human_pose"));
      if (rec.contains("human_ego")) s.human_ego = frame_from(rec.at("human_ego"), header.ego);
      out.back().steps.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ConfigError("dataset: malformed record on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (static_cast<int>(out.size()) != header.count)
    throw ConfigError("dataset: header announces " + std::to_string(header.count) + " episodes, found " +
                      std::to_string(out.size()));
  if (header_out) *header_out = header;
  return out;
}

void check_schema(const DatasetHeader& header, const Schema& schema) {
  auto same = [](const std::vector<Modality>& a, const std::vector<Modality>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].name != b[i].name || a[i].dim != b[i].dim) return false;
    return true;
  };
  if (header.domain != schema.name) throw ConfigError("dataset domain '" + header.domain + "' does not match '" + schema.name + "'");
  if (!same(header.ego, schema.ego) || !same(header.task, schema.task) || header.action_dim != schema.action_dim() ||
      header.pose_dim != schema.pose_dim)
    throw ConfigError("dataset schema does not match domain '" + schema.name + "'");
}

}  // namespace leapt
