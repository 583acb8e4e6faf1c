#include "leapt/eval.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace leapt;
namespace fs = std::filesystem;

namespace {

std::vector<Label> repeat(int value, int n) { return std::vector<Label>(static_cast<std::size_t>(n), Label(value)); }

Vector probs_of(const GroundTruthBelief& b) {
  if (const auto* c = std::get_if<CategoricalDist>(&b)) return c->probs;
  return std::get<BernoulliDist>(b).as_categorical().probs;
}

std::vector<Label> draw(const Vector& probs, int n, Rng& rng) {
  std::discrete_distribution<int> pick(probs.data(), probs.data() + probs.size());
  std::vector<Label> out;
  for (int i = 0; i < n; ++i) out.emplace_back(pick(rng));
  return out;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("labelers read clean renderings exactly") {
  FalseBelief fb;
  CHECK(std::get<int>(fb.label_task(fb.render_task_complete(FalseBelief::initial_state(0)))) == 0);
  CHECK(std::get<int>(fb.label_task(fb.render_task_complete(FalseBelief::initial_state(1)))) == 1);
  TableAssembly ta;
  Eigen::Vector2d offset(0.3141, -0.2718);
  auto s = TableAssembly::initial_state(offset, TableAssembly::ring_pose(5), TableAssembly::ring_pose(1));
  Matrix y(concat(ta.render_task_complete(s)));
  auto l = label_task_columns(ta, y);
  CHECK((std::get<Eigen::Vector2d>(l[0]) - offset).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("labelers tolerate observation noise of 0.05") {
  Rng rng(1);
  FalseBelief fb;
  FetchTool ft;
  int wrong = 0;
  for (int i = 0; i < 1000; ++i) {
    int side = i % 2, object = i % FetchTool::kObjects;
    Vector y = concat(fb.render_task_complete(FalseBelief::initial_state(side)));
    y += 0.05 * standard_normal(y.size(), 1, rng);
    wrong += std::get<int>(label_task_columns(fb, Matrix(y))[0]) != side;
    Vector z = concat(ft.render_task_complete(FetchTool::initial_state(object)));
    z += 0.05 * standard_normal(z.size(), 1, rng);
    wrong += std::get<int>(label_task_columns(ft, Matrix(z))[0]) != object;
  }
  CHECK(wrong == 0);
}

TEST_CASE("empirical distributions apply the smoothing formula") {
  const LabelSpace two{2};
  CHECK(empirical_from_labels(repeat(0, 10), two, 0.0).probs.isApprox(Vector::Unit(2, 0)));
  Vector expected(2);
  expected << 11.0 / 12.0, 1.0 / 12.0;
  CHECK(empirical_from_labels(repeat(0, 10), two, 1.0).probs.isApprox(expected, 1e-15));
  auto half = repeat(0, 5);
  for (int i = 0; i < 5; ++i) half.emplace_back(1);
  for (double alpha : {0.0, 0.01, 1.0, 7.0}) CHECK(empirical_from_labels(half, two, alpha).probs.isApprox(Vector::Constant(2, 0.5)));
  CHECK_THROWS_AS(empirical_from_labels({}, two, 0.0), ConfigError);

  std::vector<Label> pts = {Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(2.0, 1.0)};
  EmpiricalDist g = empirical_from_labels(pts, LabelSpace{0}, 0.0);
  CHECK(g.continuous);
  CHECK(g.mean.isApprox(Eigen::Vector2d(1.0, 1.0)));
  CHECK(g.var(0) == doctest::Approx(1.0));
  CHECK(g.var(1) == kBeliefVarianceFloor);
}

TEST_CASE("kl against the oracle: hand cases") {
  const LabelSpace two{2}, six{6};
  auto half = repeat(0, 50);
  for (int i = 0; i < 50; ++i) half.emplace_back(1);
  CHECK(kl_to_oracle(empirical_from_labels(half, two, 0.0), BernoulliDist(0.5)) == doctest::Approx(0.0));
  CHECK(std::abs(kl_to_oracle(empirical_from_labels(repeat(0, 10), two, 0.0), BernoulliDist(0.5)) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(kl_to_oracle(empirical_from_labels(repeat(3, 200), six, 0.0), CategoricalDist::uniform(6)) -
                 std::log(6.0)) < 1e-12);
  CHECK(kl_to_oracle(empirical_from_labels(repeat(3, 200), six, 0.01), CategoricalDist(Vector::Unit(6, 3))) < 0.1);
  // A delta oracle against a wrong ensemble stays finite once smoothed.
  double wrong = kl_to_oracle(empirical_from_labels(repeat(2, 200), six, 0.01), CategoricalDist(Vector::Unit(6, 3)));
  CHECK(std::isfinite(wrong));
  CHECK(wrong > 1.0);
  CHECK_THROWS_AS(kl_to_oracle(empirical_from_labels(repeat(0, 10), two, 0.0), GaussianBelief{}), ConfigError);
}

TEST_CASE("continuous kl is the closed-form gaussian divergence") {
  std::vector<Label> pts = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(-1.0, 1.0)};
  EmpiricalDist e = empirical_from_labels(pts, LabelSpace{0}, 0.0);
  GaussianBelief o{Eigen::Vector2d(0.2, 0.1), Eigen::Vector2d(0.5, 2.0)};
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    double r = e.var(i) / o.var(i), d = e.mean(i) - o.mean(i);
    expected += 0.5 * (r + d * d / o.var(i) - 1.0 - std::log(r));
  }
  CHECK(kl_to_oracle(e, o) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact oracle draws give small kl at N = 1000") {
  FalseBelief fb;
  FetchTool ft;
  Rng rng(2);
  std::vector<std::pair<const Domain*, GroundTruthBelief>> cases;
  auto ep = ft.scripted_episode(0, 3, 0, {FetchTool::kQueryColor, FetchTool::kQueryType});
  std::vector<Frame> hist;
  for (const auto& s : ep.steps) {
    hist.push_back(s.ego);
    cases.emplace_back(&ft, ft.belief(hist, ep.action_ids()));
  }
  cases.emplace_back(&fb, BernoulliDist(0.5));
  cases.emplace_back(&fb, BernoulliDist(1.0));
  for (const auto& [d, oracle] : cases) {
    Vector p = probs_of(oracle);
    auto labels = draw(p, 1000, rng);
    CHECK(kl_to_oracle(empirical_from_labels(labels, d->task_labels(), 0.01), oracle) < 0.05);
  }
}

TEST_CASE("entropy and mode of label sets") {
  CHECK(label_entropy(repeat(1, 9), 3) == doctest::Approx(0.0));
  std::vector<Label> all = {0, 1, 2, 3, 4, 5};
  CHECK(label_entropy(all, 6) == doctest::Approx(std::log(6.0)));
  std::vector<Label> tie = {2, 1, 2, 1};
  CHECK(mode_label(tie, 3) == 1);
}

TEST_CASE("false-belief accuracy counts pairs against the world sample") {
  FalseBelief fb;
  ConditionalBeliefs cb;
  cb.world_labels = {{0, 1}};
  cb.human_labels = {{{1, 1, 0, 1}}, {{0, 0, 0, 0}}};
  // switched: correct when the believed side differs from the world side.
  CHECK(false_belief_accuracy(fb, cb, true) == doctest::Approx(7.0 / 8.0));
  CHECK(false_belief_accuracy(fb, cb, false) == doctest::Approx(1.0 / 8.0));
  FetchTool ft;
  CHECK_THROWS_AS(false_belief_accuracy(ft, cb, true), ConfigError);
}

TEST_CASE("principal components of a line have no second component") {
  Matrix pts(3, 50);
  Rng rng(3);
  Vector dir(3);
  dir << 1.0, 2.0, -1.0;
  for (int j = 0; j < 50; ++j) pts.col(j) = dir * standard_normal(1, 1, rng)(0, 0) + Vector::Constant(3, 4.0);
  Matrix pcs = principal_components(pts, 2);
  CHECK(pcs.rows() == 2);
  CHECK(pcs.row(1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(pcs.row(0).squaredNorm() == doctest::Approx((pts.colwise() - pts.rowwise().mean()).squaredNorm()));
}

TEST_CASE("evaluation outputs: row counts, determinism, csv round trip and plots") {
  auto dir = temp_dir("leapt_eval_test");
  FetchTool ft;
  const Schema& sc = ft.schema();
  auto episodes = generate_balanced_evaluation_set(ft, 3, sc.horizon, 4);
  EvalConfig ec;
  ec.n = 20;
  ec.n_outer = 3;
  ec.n_inner = 4;
  std::vector<MetricRow> rows;
  const std::vector<ModelKind> kinds = {ModelKind::Leapt, ModelKind::BaselineS};
  const std::vector<std::uint64_t> seeds = {1, 2};
  for (ModelKind k : kinds)
    for (std::uint64_t seed : seeds) {
      auto m = create_model(ModelConfig::for_domain(sc, k), seed);
      m->mark_trained(0);
      PerspectiveModel p(sc.task, sc.ego, sc.pose_dim, {8}, seed);
      auto r = evaluate(ft, *m, p, episodes, ec, seed, {"robot_kl", "visual_pt_kl", "cond_kl"});
      auto again = evaluate(ft, *m, p, episodes, ec, seed, {"robot_kl", "visual_pt_kl", "cond_kl"});
      REQUIRE(r.metrics.size() == again.metrics.size());
      for (std::size_t i = 0; i < r.metrics.size(); ++i) CHECK(r.metrics[i].value == again.metrics[i].value);
      auto only = evaluate(ft, *m, p, episodes, ec, seed, {"cond_kl"});
      for (const auto& row : only.metrics) CHECK(row.metric == "cond_kl");
      rows.insert(rows.end(), r.metrics.begin(), r.metrics.end());
    }
  CHECK(rows.size() == kinds.size() * seeds.size() * episodes.size() * sc.horizon * kMetricNames.size());
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.value));
    CHECK(r.value >= 0.0);
  }

  write_metrics_csv(dir / "metrics.csv", rows);
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "domain,model,seed,episode,step,metric,value");
  auto back = read_metrics_csv(dir / "metrics.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].model == rows[i].model);
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].step == rows[i].step);
    CHECK(back[i].metric == rows[i].metric);
    CHECK(back[i].value == doctest::Approx(rows[i].value).epsilon(1e-12));
  }

  auto plots = write_plots(dir / "plots", rows);
  CHECK(plots.size() == kMetricNames.size());
  for (const auto& f : plots) CHECK(fs::file_size(f) > 0);
  fs::remove_all(dir);
}

TEST_CASE("degenerate conditional kl call is finite") {
  FalseBelief fb;
  const Schema& sc = fb.schema();
  auto m = create_model(ModelConfig::for_domain(sc, ModelKind::Leapt), 5);
  m->mark_trained(0);
  PerspectiveModel p(sc.task, sc.ego, sc.pose_dim, {8}, 5);
  Rng rng(6);
  auto ep = fb.evaluation_episode(0, sc.horizon, rng, 1);
  EvalConfig ec;
  ec.n_outer = 1;
  ec.n_inner = 1;
  for (double v : belief_pt_cond_kl(fb, *m, p, ep, ec, rng)) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(evaluate(fb, *m, p, {ep}, ec, 1, {"accuracy"}), ConfigError);
  auto r = evaluate(fb, *m, p, {ep}, ec, 1, {"robot_kl"});
  REQUIRE(r.accuracy.size() == 1);
  CHECK(r.accuracy[0].switched);
}

TEST_CASE("false-belief accuracy csv has the table columns") {
  auto dir = temp_dir("leapt_accuracy_test");
  write_accuracy_csv(dir / "accuracy.csv", {{"leapt", 1, true, 0.95}, {"leapt", 1, false, 0.97}});
  std::ifstream in(dir / "accuracy.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("model,seed,switched,accuracy", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  fs::remove_all(dir);
}
