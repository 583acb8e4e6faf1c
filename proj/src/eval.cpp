#include "leapt/eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace leapt {

namespace {

std::vector<Frame> frames_of(const std::vector<Vector>& xs, const std::vector<Modality>& ms) {
  std::vector<Frame> out;
  for (const auto& x : xs) out.push_back(split(x, ms));
  return out;
}

std::vector<int> first(const std::vector<int>& v, std::size_t n) { return {v.begin(), v.begin() + std::min(n, v.size())}; }

std::vector<Vector> ego_history(const Trajectory& tr) {
  std::vector<Vector> out;
  for (const auto& s : tr.steps) out.push_back(concat(s.ego));
  return out;
}

/// Exact oracle for a real (consistent) history; falls back to the confused
/// oracle if noise makes it inconsistent.
GroundTruthBelief robust_belief(const Domain& domain, const std::vector<Frame>& history, const std::vector<int>& acts,
                                double confusion) {
  try {
    return domain.belief(history, acts, 0.0);
  } catch (const InconsistentHistory&) {
    return domain.belief(history, acts, confusion);
  }
}

double gaussian_kl(const Eigen::Vector2d& m1, const Eigen::Vector2d& v1, const Eigen::Vector2d& m2,
                   const Eigen::Vector2d& v2) {
  Eigen::Array2d a = v1.array().max(kBeliefVarianceFloor), b = v2.array().max(kBeliefVarianceFloor);
  return 0.5 * ((b / a).log() + (a + (m1 - m2).array().square()) / b - 1.0).sum();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<Label> label_task_columns(const Domain& domain, const Matrix& task) {
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(task.cols()));
  for (Index j = 0; j < task.cols(); ++j) out.push_back(domain.label_task(split(task.col(j), domain.schema().task)));
  return out;
}

std::vector<Label> label_view_columns(const Domain& domain, const Matrix& ego) {
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(ego.cols()));
  for (Index j = 0; j < ego.cols(); ++j) out.push_back(domain.label_view(split(ego.col(j), domain.schema().ego)));
  return out;
}

EmpiricalDist empirical_from_labels(const std::vector<Label>& labels, const LabelSpace& space, double alpha) {
  if (labels.empty()) throw ConfigError("empirical distribution of an empty ensemble");
  EmpiricalDist d;
  d.samples = static_cast<int>(labels.size());
  d.alpha = alpha;
  d.continuous = space.continuous();
  const double n = static_cast<double>(labels.size());
  if (d.continuous) {
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
    for (const auto& l : labels) {
      const auto& v = std::get<Eigen::Vector2d>(l);
      sum += v;
      sq += v.cwiseAbs2();
    }
    d.mean = sum / n;
    d.var = (sq / n - d.mean.cwiseAbs2()).cwiseMax(kBeliefVarianceFloor);
    return d;
  }
  Vector counts = Vector::Zero(space.classes);
  for (const auto& l : labels) counts[std::get<int>(l)] += 1.0;
  d.probs = (counts.array() + alpha) / (n + alpha * space.classes);
  return d;
}

double kl_to_oracle(const EmpiricalDist& e, const GroundTruthBelief& oracle) {
  if (e.continuous) {
    const auto* g = std::get_if<GaussianBelief>(&oracle);
    if (!g) throw ConfigError("kl_to_oracle: continuous estimate against a discrete oracle");
    return gaussian_kl(e.mean, e.var, g->mean, g->var);
  }
  Vector p;
  if (const auto* b = std::get_if<BernoulliDist>(&oracle)) p = b->as_categorical().probs;
  else if (const auto* c = std::get_if<CategoricalDist>(&oracle)) p = c->probs;
  else throw ConfigError("kl_to_oracle: discrete estimate against a Gaussian oracle");
  if (p.size() != e.probs.size()) throw ConfigError("kl_to_oracle: support size mismatch");
  const double n = e.samples, k = static_cast<double>(p.size());
  Vector smoothed = (n * p.array() + e.alpha) / (n + e.alpha * k);
  return kl(CategoricalDist(e.probs), CategoricalDist(smoothed));
}

double label_entropy(const std::vector<Label>& labels, int classes) {
  if (labels.empty() || classes <= 0) throw ConfigError("label_entropy needs discrete labels");
  return CategoricalDist(empirical_from_labels(labels, {classes}, 0.0).probs).entropy();
}

int mode_label(const std::vector<Label>& labels, int classes) {
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& l : labels) ++counts[static_cast<std::size_t>(std::get<int>(l))];
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<double> robot_belief_kl(const Domain& domain, const WorldModel& model, const Trajectory& episode,
                                    const EvalConfig& config, Rng& rng) {
  const auto xs = ego_history(episode);
  const auto acts = episode.action_ids();
  const auto beliefs = model.sample_beliefs(xs, acts, config.n, rng);
  const auto frames = frames_of(xs, domain.schema().ego);
  std::vector<double> out;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto labels = label_task_columns(domain, beliefs[t].task_mean);
    auto oracle = robust_belief(domain, {frames.begin(), frames.begin() + t + 1}, first(acts, t), config.confusion);
    out.push_back(kl_to_oracle(empirical_from_labels(labels, domain.task_labels(), config.alpha), oracle));
  }
  return out;
}

std::vector<double> visual_pt_kl(const Domain& domain, const WorldModel& model, const PerspectiveModel& perspective,
                                 const Trajectory& episode, const EvalConfig& config, Rng& rng) {
  const auto xs = ego_history(episode);
  const auto acts = episode.action_ids();
  const auto beliefs = model.sample_beliefs(xs, acts, config.n, rng);
  const auto frames = frames_of(xs, domain.schema().ego);
  std::vector<double> out;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Vector& pose = episode.steps[t].human_pose;
    Matrix obs = perspective.predict(beliefs[t].task_mean, Matrix(pose));
    auto labels = label_view_columns(domain, obs);
    std::vector<Frame> hist(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(t + 1));
    GroundTruthBelief oracle;
    try {
      oracle = domain.view_belief(hist, first(acts, t), pose, 0.0);
    } catch (const InconsistentHistory&) {
      oracle = domain.view_belief(hist, first(acts, t), pose, config.confusion);
    }
    out.push_back(kl_to_oracle(empirical_from_labels(labels, domain.view_labels(), config.alpha), oracle));
  }
  return out;
}

ConditionalBeliefs conditional_beliefs(const Domain& domain, const WorldModel& model,
                                       const PerspectiveModel& perspective, const Trajectory& episode,
                                       const EvalConfig& config, Rng& rng) {
  const auto xs = ego_history(episode);
  const std::size_t T = xs.size();
  const auto human_acts = domain.perceived_by_human(episode, episode.length());
  const auto world = model.sample_beliefs(xs, episode.action_ids(), config.n_outer, rng);

  ConditionalBeliefs out;
  out.kl.assign(T, std::vector<double>(static_cast<std::size_t>(config.n_outer), 0.0));
  out.human_labels.resize(static_cast<std::size_t>(config.n_outer));
  out.final_latents.resize(world.back().latent.rows(), config.n_outer);
  std::vector<Matrix> synthesized(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.world_labels.push_back(label_task_columns(domain, world[t].task_mean));
    synthesized[t] = perspective.predict(world[t].task_mean, Matrix(episode.steps[t].human_pose));
  }
  for (int j = 0; j < config.n_outer; ++j) {
    std::vector<Vector> hx;
    for (std::size_t t = 0; t < T; ++t) hx.push_back(synthesized[t].col(j));
    const auto human = model.sample_beliefs(hx, human_acts, config.n_inner, rng);
    const auto hframes = frames_of(hx, domain.schema().ego);
    auto& labels_j = out.human_labels[static_cast<std::size_t>(j)];
    for (std::size_t t = 0; t < T; ++t) {
      labels_j.push_back(label_task_columns(domain, human[t].task_mean));
      auto oracle = domain.belief({hframes.begin(), hframes.begin() + static_cast<std::ptrdiff_t>(t + 1)},
                                  first(human_acts, t), config.confusion);
      out.kl[t][static_cast<std::size_t>(j)] =
          kl_to_oracle(empirical_from_labels(labels_j.back(), domain.task_labels(), config.alpha), oracle);
    }
    out.final_latents.col(j) = human.back().latent.col(0);
  }
  return out;
}

std::vector<double> belief_pt_cond_kl(const Domain& domain, const WorldModel& model,
                                      const PerspectiveModel& perspective, const Trajectory& episode,
                                      const EvalConfig& config, Rng& rng) {
  auto cb = conditional_beliefs(domain, model, perspective, episode, config, rng);
  std::vector<double> out;
  for (const auto& per_history : cb.kl)
    out.push_back(std::accumulate(per_history.begin(), per_history.end(), 0.0) / static_cast<double>(per_history.size()));
  return out;
}

bool episode_switched(const Trajectory& episode) {
  if (episode.steps.empty() || episode.steps.back().task.size() < 2)
    throw ConfigError("episode_switched: not a false-belief episode");
  return episode.steps.back().task[1][0] > 0.5;
}

double false_belief_accuracy(const Domain& domain, const ConditionalBeliefs& beliefs, bool switched) {
  if (domain.schema().id != DomainId::FalseBelief) throw ConfigError("false_belief_accuracy: wrong domain");
  const auto& world = beliefs.world_labels.back();
  long correct = 0, total = 0;
  for (std::size_t j = 0; j < beliefs.human_labels.size(); ++j) {
    const int w = std::get<int>(world[j]);
    for (const auto& l : beliefs.human_labels[j].back()) {
      bool same = std::get<int>(l) == w;
      correct += same == !switched;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

EvaluationResult evaluate(const Domain& domain, const WorldModel& model, const PerspectiveModel& perspective,
                          const std::vector<Trajectory>& episodes, const EvalConfig& config, std::uint64_t seed,
                          const std::set<std::string>& metrics) {
  for (const auto& m : metrics)
    if (std::find(kMetricNames.begin(), kMetricNames.end(), m) == kMetricNames.end())
      throw ConfigError("unknown metric '" + m + "'");
  EvaluationResult result;
  const std::string dom = domain.schema().name, kind = to_string(model.kind());
  const bool fb = domain.schema().id == DomainId::FalseBelief;
  std::map<bool, std::pair<double, int>> acc;
  std::vector<Vector> latents;
  auto emit = [&](int episode, const std::string& metric, const std::vector<double>& values) {
    for (std::size_t t = 0; t < values.size(); ++t)
      result.metrics.push_back({dom, kind, seed, episode, static_cast<int>(t + 1), metric, values[t]});
  };
  for (const auto& ep : episodes) {
    const auto tag = static_cast<std::uint64_t>(ep.episode) * 4;
    if (metrics.count("robot_kl")) {
      Rng rng = derive_rng(seed, tag);
      emit(ep.episode, "robot_kl", robot_belief_kl(domain, model, ep, config, rng));
    }
    if (metrics.count("visual_pt_kl")) {
      Rng rng = derive_rng(seed, tag + 1);
      emit(ep.episode, "visual_pt_kl", visual_pt_kl(domain, model, perspective, ep, config, rng));
    }
    if (metrics.count("cond_kl") || fb) {
      Rng rng = derive_rng(seed, tag + 2);
      auto cb = conditional_beliefs(domain, model, perspective, ep, config, rng);
      if (metrics.count("cond_kl")) {
        std::vector<double> mean;
        for (const auto& v : cb.kl) mean.push_back(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
        emit(ep.episode, "cond_kl", mean);
      }
      if (fb) {
        bool sw = episode_switched(ep);
        auto& a = acc[sw];
        a.first += false_belief_accuracy(domain, cb, sw);
        a.second += 1;
      }
      latents.push_back(cb.final_latents.col(0));
    }
  }
  for (const auto& [sw, a] : acc) result.accuracy.push_back({kind, seed, sw, a.first / a.second});
  if (!latents.empty()) {
    result.latents.resize(latents.front().size(), static_cast<Index>(latents.size()));
    for (std::size_t i = 0; i < latents.size(); ++i) result.latents.col(static_cast<Index>(i)) = latents[i];
  }
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "domain,model,seed,episode,step,metric,value\n";
  for (const auto& r : rows)
    out << r.domain << ',' << r.model << ',' << r.seed << ',' << r.episode << ',' << r.step << ',' << r.metric << ','
        << fmt(r.value) << '\n';
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "domain,model,seed,episode,step,metric,value") throw ConfigError(path.string() + ": not a metrics CSV");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw ConfigError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({f[0], f[1], std::stoull(f[2]), std::stoi(f[3]), std::stoi(f[4]), f[5], std::stod(f[6])});
  }
  return rows;
}

void write_accuracy_csv(const std::filesystem::path& path, const std::vector<AccuracyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "model,seed,switched,accuracy\n";
  for (const auto& r : rows) out << r.model << ',' << r.seed << ',' << (r.switched ? 1 : 0) << ',' << fmt(r.accuracy) << '\n';
}

std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const std::vector<MetricRow>& rows) {
  // (domain, metric) -> model -> step -> values
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::map<int, std::vector<double>>>> groups;
  for (const auto& r : rows) groups[{r.domain, r.metric}][r.model][r.step].push_back(r.value);
  if (!groups.empty()) std::filesystem::create_directories(dir);

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double W = 640, H = 400, L = 60, R = 150, Tm = 40, B = 50;
  std::vector<std::filesystem::path> written;
  for (const auto& [key, models] : groups) {
    int max_step = 1;
    double ymax = 0.0;
    std::map<std::string, std::vector<std::tuple<int, double, double>>> series;
    for (const auto& [model, steps] : models)
      for (const auto& [step, vals] : steps) {
        double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / static_cast<double>(vals.size()));
        series[model].emplace_back(step, mean, sd);
        max_step = std::max(max_step, step);
        ymax = std::max(ymax, mean + sd);
      }
    if (ymax <= 0.0) ymax = 1.0;
    auto px = [&](double step) { return L + (W - L - R) * (max_step == 1 ? 0.5 : (step - 1) / (max_step - 1)); };
    auto py = [&](double v) { return H - B - (H - Tm - B) * v / ymax; };

    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
        << key.first << ": " << key.second << "</text>\n"
        << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int s = 1; s <= max_step; ++s)
      svg << "<text x=\"" << px(s) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << s << "</text>\n";
    for (int i = 0; i <= 4; ++i)
      svg << "<text x=\"" << L - 6 << "\" y=\"" << py(ymax * i / 4) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
          << ymax * i / 4 << "</text>\n";
    svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">step</text>\n";
    int c = 0;
    for (const auto& [model, pts] : series) {
      const char* color = colors[c % 6];
      std::ostringstream band, line;
      band << std::fixed << std::setprecision(2);
      line << std::fixed << std::setprecision(2);
      for (const auto& [s, m, sd] : pts) band << px(s) << ',' << py(m + sd) << ' ';
      for (auto it = pts.rbegin(); it != pts.rend(); ++it)
        band << px(std::get<0>(*it)) << ',' << py(std::max(0.0, std::get<1>(*it) - std::get<2>(*it))) << ' ';
      for (const auto& [s, m, sd] : pts) line << px(s) << ',' << py(m) << ' ';
      svg << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
          << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 20 + 18 * c << "\" fill=\"" << color
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << model << "</text>\n";
      ++c;
    }
    svg << "</svg>\n";
    auto path = dir / (key.first + "_" + key.second + ".svg");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << svg.str();
    written.push_back(path);
  }
  return written;
}

Matrix principal_components(const Matrix& samples, int k) {
  if (samples.cols() == 0) return Matrix(k, 0);
  Matrix centered = samples.colwise() - samples.rowwise().mean();
  Matrix cov = centered * centered.transpose() / std::max<double>(1.0, static_cast<double>(samples.cols() - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Index d = samples.rows();
  k = static_cast<int>(std::min<Index>(k, d));
  // Eigenvalues ascend; take the last k columns in reverse.
  Matrix basis(d, k);
  for (int i = 0; i < k; ++i) basis.col(i) = eig.eigenvectors().col(d - 1 - i);
  return basis.transpose() * centered;
}

void write_pca_csv(const std::filesystem::path& path, const Matrix& samples) {
  Matrix pcs = principal_components(samples, 2);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "index,pc1,pc2\n";
  for (Index j = 0; j < pcs.cols(); ++j)
    out << j << ',' << fmt(pcs(0, j)) << ',' << fmt(pcs.rows() > 1 ? pcs(1, j) : 0.0) << '\n';
}

}  // namespace leapt
