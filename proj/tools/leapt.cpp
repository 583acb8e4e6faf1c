// leapt: gen-data / train / eval / report.
//
// Every subcommand accepts --config FILE with `key = value` lines whose keys
// are the long flag names; flags given on the command line win. Outputs go
// under $LEAPT_OUT (default ./leapt-out) unless a path flag says otherwise.
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include "leapt/eval.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <tuple>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace leapt;

namespace {

fs::path output_root() {
  const char* env = std::getenv("LEAPT_OUT");
  return env && *env ? fs::path(env) : fs::path("leapt-out");
}

fs::path default_dataset(const std::string& domain, std::uint64_t seed) {
  return output_root() / "data" / (domain + "_s" + std::to_string(seed) + ".jsonl");
}

fs::path models_dir(const std::string& domain) { return output_root() / "models" / domain; }

fs::path checkpoint_path(const fs::path& dir, const std::string& model, std::uint64_t seed) {
  return dir / (model + "_s" + std::to_string(seed) + ".ckpt");
}

fs::path sibling(const fs::path& ckpt, const std::string& suffix) {
  return ckpt.parent_path() / (ckpt.stem().string() + suffix);
}

/// Fails unless `path` could be created: its nearest existing ancestor must be
/// a writable directory. Checked before anything is written.
void require_writable(const fs::path& path) {
  fs::path p = fs::absolute(path);
  if (fs::exists(p) && fs::is_directory(p) && path.has_filename() && path.extension().empty()) {
    if (access(p.c_str(), W_OK) != 0) throw ConfigError("not writable: " + path.string());
    return;
  }
  if (fs::exists(p) && access(p.c_str(), W_OK) != 0) throw ConfigError("not writable: " + path.string());
  fs::path dir = p.parent_path();
  while (!dir.empty() && !fs::exists(dir)) dir = dir.parent_path();
  if (dir.empty() || !fs::is_directory(dir) || access(dir.c_str(), W_OK) != 0)
    throw ConfigError("not writable: " + path.string());
}

void make_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Applies `key = value` pairs from --config to options not given as flags.
void apply_config_file(CLI::App& sub, const std::string& file) {
  if (file.empty()) return;
  for (const auto& [key, value] : read_key_values(file)) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError(file + ": unknown key '" + key + "' for " + sub.get_name());
    }
    if (opt->count() > 0) continue;
    opt->clear();
    if (opt->get_expected_max() > 1) {
      for (const auto& v : split_list(value)) opt->add_result(v);
    } else {
      opt->add_result(value);
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(file + ": bad value for '" + key + "': " + e.what());
    }
  }
}

// ---- gen-data ---------------------------------------------------------------------

struct GenDataArgs {
  std::string config, domain, out;
  std::optional<int> n, len;
  std::uint64_t seed = 0;
  bool evaluation = false;
};

void cmd_gen_data(const GenDataArgs& a) {
  auto domain = make_domain(parse_domain(a.domain));
  const Schema& schema = domain->schema();
  const int n = a.n.value_or(schema.train_trajectories);
  const int len = a.len.value_or(schema.horizon);
  if (n < 0) throw ConfigError("--n must be >= 0");
  if (len < 1) throw ConfigError("--len must be >= 1");
  fs::path out = a.out.empty() ? default_dataset(schema.name, a.seed) : fs::path(a.out);
  require_writable(out);

  auto data = a.evaluation ? generate_balanced_evaluation_set(*domain, n, len, a.seed)
                           : generate_dataset(*domain, n, len, a.seed);
  make_parent(out);
  write_dataset(out, schema, data);
  std::cout << "wrote " << data.size() << " episodes of length " << len << " to " << out.string() << '\n'
            << "schema " << schema.name << ": ego " << modalities_to_string(schema.ego) << " (" << schema.ego_dim()
            << "), task " << modalities_to_string(schema.task) << " (" << schema.task_dim() << "), actions "
            << schema.action_dim() << ", pose " << schema.pose_dim << '\n';
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  std::string config, domain, model, data, checkpoint, loss_csv;
  std::uint64_t seed = 0;
  std::optional<int> epochs, batch, s_dim, h_dim, hidden, perspective_epochs;
  std::optional<double> lr, obs_std, chain_weight;
  bool resume = false;
};

void cmd_train(const TrainArgs& a) {
  auto domain = make_domain(parse_domain(a.domain));
  const Schema& schema = domain->schema();
  const ModelKind kind = parse_model_kind(a.model);

  TrainConfig tc = TrainConfig::for_domain(schema, a.seed);
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.lr) tc.adam.learning_rate = *a.lr;
  if (tc.epochs < 0) throw ConfigError("--epochs must be >= 0");
  if (!(tc.adam.learning_rate > 0.0)) throw ConfigError("--lr must be positive");

  ModelConfig mc = ModelConfig::for_domain(schema, kind);
  if (a.s_dim) mc.s_dim = *a.s_dim;
  if (a.h_dim) mc.h_dim = *a.h_dim;
  if (a.hidden) mc.hidden = *a.hidden;
  if (a.obs_std) mc.obs_std = *a.obs_std;
  if (a.chain_weight) mc.chain_weight = *a.chain_weight;
  mc.validate();

  PerspectiveTrainConfig pc;
  pc.seed = a.seed;
  if (a.perspective_epochs) pc.epochs = *a.perspective_epochs;
  if (pc.epochs < 0) throw ConfigError("--perspective-epochs must be >= 0");

  fs::path data_path = a.data.empty() ? default_dataset(schema.name, a.seed) : fs::path(a.data);
  if (!fs::exists(data_path))
    throw ConfigError("dataset " + data_path.string() + " not found (run gen-data first or pass --data)");
  fs::path ckpt = a.checkpoint.empty() ? checkpoint_path(models_dir(schema.name), to_string(kind), a.seed)
                                       : fs::path(a.checkpoint);
  fs::path loss_csv = a.loss_csv.empty() ? sibling(ckpt, "_loss.csv") : fs::path(a.loss_csv);
  fs::path persp_ckpt = sibling(ckpt, "_perspective.ckpt");
  if (a.resume && !fs::exists(ckpt)) throw ConfigError("--resume: checkpoint " + ckpt.string() + " not found");
  DatasetHeader header;
  auto data = read_dataset(data_path, &header);
  check_schema(header, schema);
  if (data.empty()) throw ConfigError("dataset " + data_path.string() + " has no episodes");
  std::unique_ptr<WorldModel> model;
  if (a.resume) {
    model = load_model(ckpt);
    if (model->kind() != kind || model->config().domain != schema.name)
      throw ConfigError("--resume: checkpoint holds " + to_string(model->kind()) + " for " + model->config().domain);
    tc.start_epoch = model->epochs_trained();
  } else {
    model = create_model(mc, a.seed);
  }
  for (const auto& p : {ckpt, loss_csv, persp_ckpt}) require_writable(p);

  make_parent(ckpt);
  make_parent(loss_csv);
  auto t0 = std::chrono::steady_clock::now();
  auto stats = train(*model, data, tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model->mark_trained(tc.start_epoch + tc.epochs);
  model->save(ckpt);
  write_loss_csv(loss_csv, stats, a.resume);
  std::cout << "trained " << to_string(kind) << " on " << schema.name << ", epochs " << tc.start_epoch + 1 << ".."
            << tc.start_epoch + tc.epochs << " in " << std::fixed << std::setprecision(1) << secs << " s";
  if (!stats.empty()) std::cout << ", final loss " << std::setprecision(4) << stats.back().loss;
  std::cout << "\ncheckpoint " << ckpt.string() << "\nloss csv " << loss_csv.string() << '\n';

  if (!a.resume || !fs::exists(persp_ckpt)) {
    PerspectiveModel persp(schema.task, schema.ego, schema.pose_dim, {64, 64}, a.seed);
    auto report = train_perspective(persp, perspective_samples(data), pc);
    persp.save(persp_ckpt);
    std::cout << "perspective model " << persp_ckpt.string() << ": train mse " << std::scientific
              << std::setprecision(3) << report.train_mse << ", held-out mse " << report.heldout_mse << '\n';
  }
}

// ---- eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string config, domain, models = "leapt,leapt-attn,baseline-s,baseline-d", seeds, models_dir, out;
  std::vector<std::string> metrics;
  int episodes = 50;
  std::uint64_t eval_seed = 1000;
  EvalConfig ec;
  int jobs = 1;
};

double mean_inference_seconds(const WorldModel& model, const Trajectory& ep) {
  std::vector<Vector> xs;
  for (const auto& s : ep.steps) xs.push_back(concat(s.ego));
  const auto acts = ep.action_ids();
  Rng rng = derive_rng(0, 0x71e);
  double total = 0.0;
  for (std::size_t t = 1; t <= xs.size(); ++t) {
    std::vector<Vector> hist(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(t));
    std::vector<int> a(acts.begin(), acts.begin() + static_cast<std::ptrdiff_t>(t - 1));
    auto t0 = std::chrono::steady_clock::now();
    model.sample_robot_belief(hist, a, 100, rng);
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return total / static_cast<double>(xs.size());
}

void cmd_eval(const EvalArgs& a) {
  auto domain = make_domain(parse_domain(a.domain));
  const Schema& schema = domain->schema();
  std::vector<ModelKind> kinds;
  for (const auto& m : split_list(a.models)) kinds.push_back(parse_model_kind(m));
  if (kinds.empty()) throw ConfigError("--models is empty");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + s + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds is required");
  std::set<std::string> metrics(a.metrics.begin(), a.metrics.end());
  if (metrics.empty()) metrics.insert(kMetricNames.begin(), kMetricNames.end());
  for (const auto& m : metrics)
    if (std::find(kMetricNames.begin(), kMetricNames.end(), m) == kMetricNames.end())
      throw ConfigError("unknown metric '" + m + "'");
  if (a.episodes < 1) throw ConfigError("--episodes must be >= 1");
  if (a.ec.n < 1 || a.ec.n_outer < 1 || a.ec.n_inner < 1) throw ConfigError("sample counts must be >= 1");
  if (!(a.ec.alpha >= 0.0)) throw ConfigError("--alpha must be >= 0");
  if (a.jobs < 1) throw ConfigError("--jobs must be >= 1");

  const fs::path mdir = a.models_dir.empty() ? models_dir(schema.name) : fs::path(a.models_dir);
  const fs::path out = a.out.empty() ? output_root() / "eval" / schema.name : fs::path(a.out);
  struct Job {
    ModelKind kind;
    std::uint64_t seed;
    fs::path ckpt;
  };
  std::vector<Job> jobs;
  for (ModelKind k : kinds)
    for (std::uint64_t s : seeds) {
      fs::path c = checkpoint_path(mdir, to_string(k), s);
      for (const auto& p : {c, sibling(c, "_perspective.ckpt")})
        if (!fs::exists(p)) throw ConfigError("missing checkpoint " + p.string());
      jobs.push_back({k, s, c});
    }
  require_writable(out / "metrics.csv");

  const auto episodes = generate_balanced_evaluation_set(*domain, a.episodes, schema.horizon, a.eval_seed);
  struct Outcome {
    EvaluationResult result;
    double inference = 0.0;
  };
  auto run = [&](const Job& j) {
    auto model = load_model(j.ckpt);
    if (model->config().domain != schema.name)
      throw ConfigError(j.ckpt.string() + " was trained on " + model->config().domain);
    auto persp = PerspectiveModel::load(sibling(j.ckpt, "_perspective.ckpt"));
    Outcome o;
    o.result = evaluate(*domain, *model, persp, episodes, a.ec, a.eval_seed, metrics);
    for (auto& r : o.result.metrics) r.seed = j.seed;
    for (auto& r : o.result.accuracy) r.seed = j.seed;
    o.inference = mean_inference_seconds(*model, episodes.front());
    return o;
  };
  std::vector<Outcome> outcomes(jobs.size());
  for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(a.jobs)) {
    std::vector<std::future<Outcome>> running;
    const std::size_t end = std::min(jobs.size(), start + static_cast<std::size_t>(a.jobs));
    for (std::size_t i = start; i < end; ++i)
      running.push_back(std::async(a.jobs > 1 ? std::launch::async : std::launch::deferred, run, jobs[i]));
    for (std::size_t i = start; i < end; ++i) outcomes[i] = running[i - start].get();
  }

  fs::create_directories(out);
  std::vector<MetricRow> rows;
  std::vector<AccuracyRow> accuracy;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& r = outcomes[i].result;
    rows.insert(rows.end(), r.metrics.begin(), r.metrics.end());
    accuracy.insert(accuracy.end(), r.accuracy.begin(), r.accuracy.end());
    if (r.latents.cols() >= 2)
      write_pca_csv(out / ("pca_" + to_string(jobs[i].kind) + "_s" + std::to_string(jobs[i].seed) + ".csv"), r.latents);
  }
  write_metrics_csv(out / "metrics.csv", rows);
  auto plots = write_plots(out / "plots", rows);

  std::cout << "evaluated " << jobs.size() << " checkpoints on " << episodes.size() << " episodes; wrote "
            << rows.size() << " rows to " << (out / "metrics.csv").string() << " and " << plots.size() << " plots\n";
  std::cout << std::fixed << std::setprecision(4);
  for (ModelKind k : kinds) {
    std::cout << to_string(k);
    for (const auto& m : metrics) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : rows)
        if (r.model == to_string(k) && r.metric == m) sum += r.value, ++n;
      std::cout << "  " << m << " " << (n ? sum / n : NAN);
    }
    double inf = 0.0;
    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (jobs[i].kind == k) inf = std::max(inf, outcomes[i].inference);
    std::cout << "  inference/step " << inf * 1e3 << " ms\n";
  }
  if (!accuracy.empty()) {
    write_accuracy_csv(out / "accuracy.csv", accuracy);
    std::cout << "\nmodel        switched  accuracy (mean over seeds)\n";
    for (ModelKind k : kinds)
      for (bool sw : {false, true}) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : accuracy)
          if (r.model == to_string(k) && r.switched == sw) sum += r.accuracy, ++n;
        if (n)
          std::cout << std::left << std::setw(13) << to_string(k) << std::setw(10) << (sw ? "yes" : "no") << sum / n
                    << '\n';
      }
  }
}

// ---- report -----------------------------------------------------------------------

struct ReportArgs {
  std::string config, out;
  std::vector<std::string> metrics;
};

void cmd_report(const ReportArgs& a) {
  std::vector<fs::path> inputs(a.metrics.begin(), a.metrics.end());
  if (inputs.empty()) {
    fs::path eval_dir = output_root() / "eval";
    if (fs::exists(eval_dir))
      for (const auto& e : fs::directory_iterator(eval_dir))
        if (fs::exists(e.path() / "metrics.csv")) inputs.push_back(e.path() / "metrics.csv");
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) throw ConfigError("no metrics CSV given and none found under " + (output_root() / "eval").string());
  for (const auto& p : inputs)
    if (!fs::exists(p)) throw ConfigError("metrics CSV " + p.string() + " not found");
  const fs::path out = a.out.empty() ? output_root() / "report" : fs::path(a.out);
  std::vector<MetricRow> rows;
  for (const auto& p : inputs) {
    auto r = read_metrics_csv(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  require_writable(out / "summary.csv");

  fs::create_directories(out);
  auto plots = write_plots(out, rows);
  // (domain, metric, model) -> per-seed means, then mean and std over seeds.
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::uint64_t, std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    auto& cell = acc[{r.domain, r.metric, r.model}][r.seed];
    cell.first += r.value;
    cell.second += 1;
  }
  std::ofstream csv(out / "summary.csv");
  csv << "domain,metric,model,seeds,mean,std\n";
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [key, per_seed] : acc) {
    std::vector<double> v;
    for (const auto& [seed, c] : per_seed) v.push_back(c.first / c.second);
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    const auto& [dom, metric, model] = key;
    csv << dom << ',' << metric << ',' << model << ',' << v.size() << ',' << std::setprecision(17) << mean << ','
        << sd << '\n';
    std::cout << std::left << std::setw(16) << dom << std::setw(14) << metric << std::setw(12) << model
              << std::setprecision(4) << mean << " +- " << sd << "  (" << v.size() << " seeds)\n";
  }
  std::cout << "wrote " << (out / "summary.csv").string() << " and " << plots.size() << " plots\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perspective-taking world models: data generation, training, evaluation and reporting"};
  app.require_subcommand(1);

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset of random-action roll-outs");
  gen->add_option("--config", g.config, "key = value file");
  gen->add_option("--domain", g.domain, "false-belief | fetch-tool | table-assembly")->required();
  gen->add_option("--n", g.n, "Number of episodes (default: domain setting)");
  gen->add_option("--len", g.len, "Episode length (default: domain horizon)");
  gen->add_option("--seed", g.seed, "Random seed")->required();
  gen->add_option("--out", g.out, "Output file (default: $LEAPT_OUT/data/<domain>_s<seed>.jsonl)");
  gen->add_flag("--evaluation", g.evaluation, "Scripted evaluation episodes instead of training roll-outs");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train a world model and the perspective model");
  tr->add_option("--config", t.config, "key = value file");
  tr->add_option("--domain", t.domain, "Domain name")->required();
  tr->add_option("--model", t.model, "leapt | leapt-attn | baseline-s | baseline-d")->required();
  tr->add_option("--seed", t.seed, "Random seed")->required();
  tr->add_option("--data", t.data, "Dataset (default: the gen-data path for this seed)");
  tr->add_option("--checkpoint", t.checkpoint, "Checkpoint (default: $LEAPT_OUT/models/<domain>/<model>_s<seed>.ckpt)");
  tr->add_option("--loss-csv", t.loss_csv, "Per-epoch loss CSV (default: next to the checkpoint)");
  tr->add_option("--epochs", t.epochs, "Epochs (default: domain setting)");
  tr->add_option("--batch", t.batch, "Trajectories per step; 0 = whole dataset");
  tr->add_option("--lr", t.lr, "Adam learning rate");
  tr->add_option("--obs-std", t.obs_std, "Decoder standard deviation");
  tr->add_option("--chain-weight", t.chain_weight, "Weight of the prior-chain KL (decomposed model)");
  tr->add_option("--s-dim", t.s_dim, "Ego latent size");
  tr->add_option("--h-dim", t.h_dim, "Hidden-information latent size");
  tr->add_option("--hidden", t.hidden, "Hidden layer width");
  tr->add_option("--perspective-epochs", t.perspective_epochs, "Epochs for the perspective model");
  tr->add_flag("--resume", t.resume, "Continue training the existing checkpoint");

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Compute KL metrics for trained checkpoints");
  ev->add_option("--config", e.config, "key = value file");
  ev->add_option("--domain", e.domain, "Domain name")->required();
  ev->add_option("--models", e.models, "Comma-separated model kinds");
  ev->add_option("--seeds", e.seeds, "Comma-separated training seeds")->required();
  ev->add_option("--metric", e.metrics, "robot_kl | visual_pt_kl | cond_kl (repeatable; default all)");
  ev->add_option("--episodes", e.episodes, "Evaluation episodes");
  ev->add_option("--eval-seed", e.eval_seed, "Seed of the evaluation episodes and samplers");
  ev->add_option("--n", e.ec.n, "Belief samples per step");
  ev->add_option("--n-outer", e.ec.n_outer, "Synthesized human histories");
  ev->add_option("--n-inner", e.ec.n_inner, "Human-belief samples per history");
  ev->add_option("--alpha", e.ec.alpha, "Smoothing pseudo-count");
  ev->add_option("--models-dir", e.models_dir, "Checkpoint directory (default: $LEAPT_OUT/models/<domain>)");
  ev->add_option("--out", e.out, "Output directory (default: $LEAPT_OUT/eval/<domain>)");
  ev->add_option("--jobs", e.jobs, "Checkpoints evaluated in parallel");

  ReportArgs r;
  auto* rep = app.add_subcommand("report", "Aggregate metrics CSVs into plots and a summary");
  rep->add_option("--config", r.config, "key = value file");
  rep->add_option("--metrics", r.metrics, "Metrics CSVs (default: every $LEAPT_OUT/eval/*/metrics.csv)");
  rep->add_option("--out", r.out, "Output directory (default: $LEAPT_OUT/report)");

  // Required options may come from the config file, so requirements are
  // checked after it has been applied.
  std::map<CLI::App*, std::vector<CLI::Option*>> required;
  for (CLI::App* sub : {gen, tr, ev, rep})
    for (CLI::Option* opt : sub->get_options())
      if (opt->get_required()) {
        required[sub].push_back(opt);
        opt->required(false);
      }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string config = sub->get_option("--config")->as<std::string>();
    apply_config_file(*sub, config);
    for (CLI::Option* opt : required[sub])
      if (opt->count() == 0) throw ConfigError(opt->get_name() + " is required");
    if (sub == gen) cmd_gen_data(g);
    else if (sub == tr) cmd_train(t);
    else if (sub == ev) cmd_eval(e);
    else cmd_report(r);
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
