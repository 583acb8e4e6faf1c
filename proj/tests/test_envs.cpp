#include "leapt/envs.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace leapt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("leapt_test_" + name); }

std::vector<Frame> ego_prefix(const Trajectory& tr, int upto) {
  std::vector<Frame> out;
  for (int t = 0; t < upto; ++t) out.push_back(tr.steps[t].ego);
  return out;
}

std::vector<Frame> human_prefix(const Trajectory& tr, int upto) {
  std::vector<Frame> out;
  for (int t = 0; t < upto; ++t) out.push_back(tr.steps[t].human_ego);
  return out;
}

std::vector<int> actions_prefix(const Trajectory& tr, int upto) {
  auto a = tr.action_ids();
  return {a.begin(), a.begin() + std::max(0, upto - 1)};
}

/// Least-squares probe on flattened robot ego histories; returns held-out
/// predictions for the test rows.
Matrix linear_probe(const Matrix& train_x, const Matrix& train_y, const Matrix& test_x) {
  auto with_bias = [](const Matrix& x) {
    Matrix out(x.rows(), x.cols() + 1);
    out << x, Matrix::Ones(x.rows(), 1);
    return out;
  };
  Matrix a = with_bias(train_x);
  Matrix reg = 1e-6 * Matrix::Identity(a.cols(), a.cols());
  Matrix w = (a.transpose() * a + reg).ldlt().solve(a.transpose() * train_y);
  return with_bias(test_x) * w;
}

Matrix flat_histories(const std::vector<Trajectory>& eps) {
  const Index d = concat(eps.front().steps.front().ego).size() * eps.front().length();
  Matrix x(static_cast<Index>(eps.size()), d);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    Index at = 0;
    for (const auto& s : eps[i].steps) {
      Vector v = concat(s.ego);
      x.row(static_cast<Index>(i)).segment(at, v.size()) = v.transpose();
      at += v.size();
    }
  }
  return x;
}

}  // namespace

// ---- transitions ---------------------------------------------------------------

TEST_CASE("false-belief no-op keeps the drill where it is") {
  for (int side : {0, 1}) {
    auto s = FalseBelief::initial_state(side);
    for (int t = 0; t < 4; ++t) {
      s = FalseBelief::step(s, FalseBelief::kNoop);
      CHECK(s.drill_side == side);
    }
  }
}

TEST_CASE("false-belief switches only while the human is away") {
  auto s = FalseBelief::initial_state(0);
  s = FalseBelief::step(s, FalseBelief::kSwitch);  // human still at the boxes at step 2
  CHECK_FALSE(s.switched);
  s = FalseBelief::step(s, FalseBelief::kSwitch);
  CHECK(s.switched);
  CHECK_FALSE(s.human_at_boxes);
  CHECK(s.drill_side == 1);
  CHECK_THROWS_AS(FalseBelief::step(s, 7), ConfigError);
}

TEST_CASE("table-assembly +x move lowers the offset by exactly the step") {
  auto s = TableAssembly::initial_state({0.3, -0.2}, TableAssembly::ring_pose(5), TableAssembly::ring_pose(1));
  auto n = TableAssembly::step(s, TableAssembly::kPlusX);
  CHECK(n.offset.x() == s.offset.x() - 0.1);
  CHECK(n.offset.y() == s.offset.y());
  CHECK_THROWS_AS(TableAssembly::step(s, 5), ConfigError);
}

TEST_CASE("fetch-tool human answers queries truthfully") {
  auto s = FetchTool::initial_state(0);  // brown table
  s = FetchTool::step(s, FetchTool::kQueryColor);
  REQUIRE(s.messages.size() == 1);
  CHECK(s.messages[0].color == 0);
  CHECK(s.messages[0].type == -1);
  CHECK(FetchTool::kColorNames[static_cast<std::size_t>(s.messages[0].color)] == "brown");
  s = FetchTool::step(s, FetchTool::kQueryType);
  CHECK(s.known_type() == 0);
  CHECK_THROWS_AS(FetchTool::step(s, 9), ConfigError);
}

// ---- rendering -----------------------------------------------------------------

TEST_CASE("false-belief robot at its task pose never sees the drill") {
  FalseBelief fb;
  for (int side : {0, 1})
    for (int a1 : {0, 1})
      for (int a2 : {0, 1}) {
        auto s = FalseBelief::initial_state(side);
        for (int a : {a1, a2, 0}) {
          Frame f = fb.render_ego(s, FbPose::Behind);
          CHECK(f[1].head(2).isZero(0.0));
          CHECK(fb.render_ego(s, FbPose::Away)[1].isZero(0.0));
          s = FalseBelief::step(s, a);
        }
      }
}

TEST_CASE("false-belief human sees the drill only at the boxes") {
  FalseBelief fb;
  auto s = FalseBelief::initial_state(1);
  CHECK(fb.render_ego(s, FalseBelief::human_pose(s))[1][1] == 1.0);
  s = FalseBelief::step(FalseBelief::step(s, 0), 0);
  CHECK_FALSE(s.human_at_boxes);
  CHECK(fb.render_ego(s, FalseBelief::human_pose(s))[1].head(2).isZero(0.0));
}

TEST_CASE("fetch-tool human screen decodes to the object; robot sees only messages") {
  FetchTool ft;
  for (int o = 0; o < FetchTool::kObjects; ++o) {
    auto s = FetchTool::initial_state(o);
    CHECK(ft.screen_class(ft.render_ego(s, FtPose::Screen)) == o);
    Frame robot = ft.render_ego(s, FtPose::Far);
    CHECK(robot[1].isZero(0.0));
    CHECK(ft.screen_class(robot) == FetchTool::kObjects);
  }
}

TEST_CASE("table-assembly occluded observer gets zero offset channels and the indicator") {
  TableAssembly ta;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector2d off(uniform(rng, -1, 1), uniform(rng, -1, 1));
    Vector occluded_pose = TableAssembly::ring_pose(uniform_int(rng, 4, 7));
    auto s = TableAssembly::initial_state(off, TableAssembly::ring_pose(5), occluded_pose);
    Frame f = ta.render_ego(s, occluded_pose);
    CHECK(f[1][0] == 1.0);
    CHECK(f[1].tail(2).isZero(0.0));
    CHECK(f[2][3] == 1.0);  // "cannot see" message
    Frame seen = ta.render_ego(s, TableAssembly::ring_pose(uniform_int(rng, 0, 3)));
    CHECK(seen[1][0] == 0.0);
    CHECK(seen[1][1] == s.offset.x());
  }
}

TEST_CASE("ego modalities carry the observer's pose") {
  FalseBelief fb;
  FetchTool ft;
  CHECK(fb.render_ego(FalseBelief::initial_state(0), FbPose::Away)[0] == FalseBelief::pose(FbPose::Away));
  CHECK(ft.render_ego(FetchTool::initial_state(3), FtPose::Far)[0] == FetchTool::pose(FtPose::Far));
}

TEST_CASE("task-complete observations recover the task label") {
  FalseBelief fb;
  FetchTool ft;
  TableAssembly ta;
  int fb_states = 0;
  for (int side : {0, 1})
    for (bool switched : {false, true})
      for (bool at_boxes : {false, true}) {
        FalseBeliefState s{side, switched, at_boxes, 1};
        Frame y = fb.render_task_complete(s);
        CHECK(std::get<int>(fb.label_task(y)) == side);
        CHECK(concat(y).size() == fb.schema().task_dim());
        ++fb_states;
      }
  CHECK(fb_states == 8);
  for (int o = 0; o < FetchTool::kObjects; ++o) {
    Frame y = ft.render_task_complete(FetchTool::initial_state(o));
    CHECK(std::get<int>(ft.label_task(y)) == o);
    CHECK(concat(y).size() == ft.schema().task_dim());
  }
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector2d off(uniform(rng, -1, 1), uniform(rng, -1, 1));
    auto s = TableAssembly::initial_state(off, TableAssembly::ring_pose(5), TableAssembly::ring_pose(0));
    Frame y = ta.render_task_complete(s);
    CHECK((std::get<Eigen::Vector2d>(ta.label_task(y)) - off).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(concat(y).size() == ta.schema().task_dim());
  }
}

// ---- oracles -------------------------------------------------------------------

TEST_CASE("fetch-tool oracle: uniform before messages, brown objects after color(brown)") {
  FetchTool ft;
  auto tr = ft.scripted_episode(0, 3, 1, {FetchTool::kNoop, FetchTool::kQueryColor});
  auto p0 = std::get<CategoricalDist>(ft.belief(ego_prefix(tr, 1), {}));
  CHECK(p0.probs.isApprox(Vector::Constant(6, 1.0 / 6.0), 1e-12));
  auto p1 = std::get<CategoricalDist>(ft.belief(ego_prefix(tr, 2), actions_prefix(tr, 2)));
  CHECK(p1.probs.isApprox(p0.probs, 1e-12));
  auto p2 = std::get<CategoricalDist>(ft.belief(ego_prefix(tr, 3), actions_prefix(tr, 3)));
  Vector brown = Vector::Zero(6);
  brown.head(2).setConstant(0.5);
  CHECK(p2.probs.isApprox(brown, 1e-12));
}

TEST_CASE("fetch-tool human oracle is a delta on the true object") {
  FetchTool ft;
  for (int o = 0; o < FetchTool::kObjects; ++o) {
    auto tr = ft.scripted_episode(o, 3, o, {FetchTool::kQueryType});
    for (int t = 1; t <= 3; ++t) {
      auto p = std::get<CategoricalDist>(ft.belief(human_prefix(tr, t), ft.perceived_by_human(tr, t)));
      CHECK(p.probs[o] == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("false-belief oracle: robot that saw a switch but never the drill is at one half") {
  FalseBelief fb;
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    auto tr = fb.evaluation_episode(i, 5, rng, 1);
    for (int t = 1; t <= 5; ++t) {
      auto b = std::get<BernoulliDist>(fb.belief(ego_prefix(tr, t), actions_prefix(tr, t)));
      CHECK(b.p_left == doctest::Approx(0.5));
    }
  }
}

TEST_CASE("false-belief human keeps the observed side after an unseen switch") {
  FalseBelief fb;
  Rng rng(4);
  for (int side : {0, 1}) {
    Trajectory tr;
    do tr = fb.evaluation_episode(0, 5, rng, 1);
    while (std::get<int>(fb.label_task(tr.steps[0].task)) != side);
    CHECK(std::get<int>(fb.label_task(tr.steps[4].task)) == 1 - side);
    auto b = std::get<BernoulliDist>(fb.belief(human_prefix(tr, 5), fb.perceived_by_human(tr, 5)));
    CHECK(b.p_left == doctest::Approx(side == 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("table-assembly human oracle without a view stays at the prior") {
  TableAssembly ta;
  Rng rng(5);
  auto tr = ta.evaluation_episode(0, 10, rng, 0);
  const double prior_var = 1.0 / 12.0;
  Eigen::Vector2d displacement = Eigen::Vector2d::Zero();
  auto acts = tr.action_ids();
  for (int t = 1; t <= 10; ++t) {
    auto g = std::get<GaussianBelief>(ta.belief(human_prefix(tr, t), ta.perceived_by_human(tr, t)));
    CHECK((g.mean + displacement).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.var.isApprox(Eigen::Vector2d::Constant(prior_var)));
    if (t < 10) displacement += TableAssembly::move_of(acts[t - 1]);
  }
  auto first = std::get<GaussianBelief>(ta.belief(human_prefix(tr, 1), {}));
  CHECK(first.mean.isZero(0.0));
}

TEST_CASE("oracles are proper and ignore uninformative repeats") {
  FalseBelief fb;
  FetchTool ft;
  TableAssembly ta;
  Rng rng(6);
  for (const Domain* d : {static_cast<const Domain*>(&fb), static_cast<const Domain*>(&ft), static_cast<const Domain*>(&ta)}) {
    for (int i = 0; i < 20; ++i) {
      auto tr = d->evaluation_episode(i, d->schema().horizon, rng);
      const int T = tr.length();
      auto hist = ego_prefix(tr, T);
      auto acts = actions_prefix(tr, T);
      auto base = d->belief(hist, acts);
      hist.push_back(hist.back());
      acts.push_back(0);
      auto extended = d->belief(hist, acts);
      if (auto* c = std::get_if<CategoricalDist>(&base)) {
        CHECK(c->probs.minCoeff() >= 0.0);
        CHECK(c->probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::get<CategoricalDist>(extended).probs.isApprox(c->probs, 1e-12));
      } else if (auto* b = std::get_if<BernoulliDist>(&base)) {
        CHECK(std::get<BernoulliDist>(extended).p_left == doctest::Approx(b->p_left));
      } else {
        auto g = std::get<GaussianBelief>(base);
        auto e = std::get<GaussianBelief>(extended);
        CHECK((g.var.array() > 0.0).all());
        CHECK(e.mean.isApprox(g.mean, 1e-12));
        CHECK(e.var.isApprox(g.var, 1e-12));
      }
    }
  }
}

TEST_CASE("oracles reject contradicting histories unless confusion is allowed") {
  FetchTool ft;
  auto a = ft.scripted_episode(0, 2, 0, {FetchTool::kQueryColor});  // brown
  auto b = ft.scripted_episode(0, 2, 2, {FetchTool::kQueryColor});  // white
  std::vector<Frame> hist = {a.steps[1].ego, b.steps[1].ego};
  CHECK_THROWS_AS(ft.belief(hist, {0}), InconsistentHistory);
  CHECK_NOTHROW(ft.belief(hist, {0}, 0.01));
}

// ---- information barrier -------------------------------------------------------

TEST_CASE("robot ego histories carry no information about the hidden variable") {
  Rng rng(7);
  SUBCASE("false-belief drill side") {
    FalseBelief fb;
    auto train = generate_evaluation_set(fb, 400, 5, 11);
    auto test = generate_evaluation_set(fb, 400, 5, 12);
    auto labels = [&](const std::vector<Trajectory>& eps) {
      Matrix y = Matrix::Zero(static_cast<Index>(eps.size()), 2);
      for (std::size_t i = 0; i < eps.size(); ++i) y(static_cast<Index>(i), std::get<int>(fb.label_task(eps[i].steps[0].task))) = 1;
      return y;
    };
    Matrix pred = linear_probe(flat_histories(train), labels(train), flat_histories(test));
    Matrix truth = labels(test);
    int correct = 0;
    for (Index i = 0; i < pred.rows(); ++i) {
      Index k;
      pred.row(i).maxCoeff(&k);
      correct += truth(i, k) == 1.0;
    }
    CHECK(std::abs(correct / 400.0 - 0.5) < 0.075);  // 3 sd of a fair coin over 400 trials
  }
  SUBCASE("fetch-tool object without messages") {
    FetchTool ft;
    std::vector<Trajectory> train, test;
    for (int i = 0; i < 600; ++i) {
      train.push_back(ft.scripted_episode(i, 5, uniform_int(rng, 0, 5), {}));
      test.push_back(ft.scripted_episode(i, 5, uniform_int(rng, 0, 5), {}));
    }
    auto labels = [&](const std::vector<Trajectory>& eps) {
      Matrix y = Matrix::Zero(static_cast<Index>(eps.size()), 6);
      for (std::size_t i = 0; i < eps.size(); ++i) y(static_cast<Index>(i), std::get<int>(ft.label_task(eps[i].steps[0].task))) = 1;
      return y;
    };
    Matrix pred = linear_probe(flat_histories(train), labels(train), flat_histories(test));
    Matrix truth = labels(test);
    int correct = 0;
    for (Index i = 0; i < pred.rows(); ++i) {
      Index k;
      pred.row(i).maxCoeff(&k);
      correct += truth(i, k) == 1.0;
    }
    CHECK(correct / 600.0 < 1.0 / 6.0 + 0.05);
  }
  SUBCASE("table-assembly offset with the human occluded") {
    TableAssembly ta;
    std::vector<Trajectory> train, test;
    for (int i = 0; i < 400; ++i) {
      train.push_back(ta.evaluation_episode(i, 10, rng, 0));
      test.push_back(ta.evaluation_episode(i, 10, rng, 0));
    }
    auto offsets = [&](const std::vector<Trajectory>& eps) {
      Matrix y(static_cast<Index>(eps.size()), 2);
      for (std::size_t i = 0; i < eps.size(); ++i)
        y.row(static_cast<Index>(i)) = std::get<Eigen::Vector2d>(ta.label_task(eps[i].steps[0].task)).transpose();
      return y;
    };
    // Robot histories only reveal the actions taken, which are independent
    // of the initial offset: explained variance must stay near zero.
    Matrix truth = offsets(test);
    Matrix pred = linear_probe(flat_histories(train), offsets(train), flat_histories(test));
    double residual = (pred - truth).squaredNorm();
    double total = (truth.rowwise() - truth.colwise().mean()).squaredNorm();
    CHECK(1.0 - residual / total < 0.1);
  }
}

// ---- datasets ------------------------------------------------------------------

TEST_CASE("dataset sizes follow the domain settings") {
  for (DomainId id : {DomainId::FalseBelief, DomainId::FetchTool, DomainId::TableAssembly}) {
    auto d = make_domain(id);
    const auto& s = d->schema();
    auto data = generate_dataset(*d, s.train_trajectories, s.horizon, 1);
    CHECK(static_cast<int>(data.size()) == s.train_trajectories);
    for (const auto& tr : data) {
      CHECK(tr.length() == s.horizon);
      for (const auto& st : tr.steps) {
        CHECK(concat(st.ego).size() == s.ego_dim());
        CHECK(concat(st.task).size() == s.task_dim());
        CHECK(st.action.size() == s.action_dim());
        CHECK(st.robot_pose.size() == s.pose_dim);
        CHECK(st.human_pose.size() == s.pose_dim);
      }
    }
  }
  CHECK(make_domain(DomainId::FalseBelief)->schema().train_trajectories == 30);
  CHECK(make_domain(DomainId::FetchTool)->schema().train_trajectories == 100);
  CHECK(make_domain(DomainId::TableAssembly)->schema().train_trajectories == 300);
  CHECK(make_domain(DomainId::TableAssembly)->schema().horizon == 10);
}

TEST_CASE("datasets are balanced over the hidden variable") {
  FetchTool ft;
  auto data = generate_dataset(ft, 60, 5, 3);
  std::vector<int> counts(6, 0);
  for (const auto& tr : data) ++counts[static_cast<std::size_t>(std::get<int>(ft.label_task(tr.steps[0].task)))];
  for (int c : counts) CHECK(c == 10);
}

TEST_CASE("dataset files are byte-identical for equal seeds and round-trip") {
  for (DomainId id : {DomainId::FalseBelief, DomainId::FetchTool, DomainId::TableAssembly}) {
    auto d = make_domain(id);
    const auto& s = d->schema();
    auto a = temp_file("a.jsonl"), b = temp_file("b.jsonl"), c = temp_file("c.jsonl");
    write_dataset(a, s, generate_dataset(*d, 12, s.horizon, 5));
    write_dataset(b, s, generate_dataset(*d, 12, s.horizon, 5));
    write_dataset(c, s, generate_dataset(*d, 12, s.horizon, 6));
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));

    DatasetHeader h;
    auto back = read_dataset(a, &h);
    check_schema(h, s);
    auto orig = generate_dataset(*d, 12, s.horizon, 5);
    REQUIRE(back.size() == orig.size());
    for (std::size_t i = 0; i < back.size(); ++i)
      for (int t = 0; t < s.horizon; ++t) {
        CHECK(concat(back[i].steps[t].ego) == concat(orig[i].steps[t].ego));
        CHECK(concat(back[i].steps[t].task) == concat(orig[i].steps[t].task));
        CHECK(back[i].steps[t].action == orig[i].steps[t].action);
        CHECK(concat(back[i].steps[t].human_ego) == concat(orig[i].steps[t].human_ego));
        CHECK(back[i].steps[t].human_pose == orig[i].steps[t].human_pose);
      }
    for (const auto& p : {a, b, c}) fs::remove(p);
  }
}

TEST_CASE("empty dataset keeps a valid header; schema mismatch is rejected") {
  FalseBelief fb;
  FetchTool ft;
  auto p = temp_file("empty.jsonl");
  write_dataset(p, fb.schema(), {});
  DatasetHeader h;
  auto data = read_dataset(p, &h);
  CHECK(data.empty());
  CHECK(h.count == 0);
  CHECK(h.domain == "false-belief");
  CHECK_NOTHROW(check_schema(h, fb.schema()));
  CHECK_THROWS_AS(check_schema(h, ft.schema()), ConfigError);
  fs::remove(p);
}

TEST_CASE("evaluation episodes keep the robot at its task pose") {
  Rng rng(8);
  FalseBelief fb;
  FetchTool ft;
  TableAssembly ta;
  for (int i = 0; i < 10; ++i) {
    for (const auto& st : fb.evaluation_episode(i, 5, rng).steps) CHECK(FalseBelief::pose_class(st.robot_pose) == FbPose::Behind);
    for (const auto& st : ft.evaluation_episode(i, 5, rng).steps) CHECK(FetchTool::pose_class(st.robot_pose) == FtPose::Far);
    for (const auto& st : ta.evaluation_episode(i, 10, rng).steps) CHECK(st.robot_pose == TableAssembly::ring_pose(TableAssembly::kRobotTaskPose));
  }
}
