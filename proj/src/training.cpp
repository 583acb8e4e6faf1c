#include "leapt/worldmodel.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace leapt {

TrainConfig TrainConfig::for_domain(const Schema& schema, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = schema.epochs;
  c.batch_size = schema.batch_size;
  c.adam.learning_rate = schema.learning_rate;
  c.seed = seed;
  return c;
}

std::vector<EpochStats> train(WorldModel& model, const std::vector<Trajectory>& data, const TrainConfig& config) {
  if (data.empty()) throw ConfigError("train: empty dataset");
  if (config.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  const int n = static_cast<int>(data.size());
  const int batch = config.batch_size <= 0 ? n : std::min(config.batch_size, n);
  const int ego_dim = model.config().ego_dim(), task_dim = model.config().task_dim();
  if (concat(data.front().steps.at(0).ego).size() != ego_dim || concat(data.front().steps.at(0).task).size() != task_dim)
    throw ConfigError("train: dataset dimensions do not match the model");

  Adam adam(model.parameters(), config.adam);
  std::vector<EpochStats> history;
  std::vector<int> order(n);
  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = config.start_epoch + e + 1;
    // Per-epoch streams keep resumed runs on the same random sequence.
    Rng shuffle = derive_rng(config.seed, 3ULL * static_cast<std::uint64_t>(epoch));
    Rng noise = derive_rng(config.seed, 3ULL * static_cast<std::uint64_t>(epoch) + 1);
    Rng dropout = derive_rng(config.seed, 3ULL * static_cast<std::uint64_t>(epoch) + 2);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle);

    EpochStats stats;
    stats.epoch = epoch;
    for (int start = 0; start < n; start += batch) {
      std::vector<int> idx(order.begin() + start, order.begin() + std::min(n, start + batch));
      SequenceBatch b = make_batch(data, idx);
      Tape tape;
      LossTerms terms;
      try {
        terms = model.loss(tape, b, noise, dropout);
        tape.backward(terms.total);
        adam.step();
      } catch (const NumericalError& err) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + err.what());
      }
      const double w = static_cast<double>(idx.size()) / n;
      stats.loss += w * terms.total.scalar();
      stats.recon_x += w * terms.recon_x;
      stats.recon_y += w * terms.recon_y;
      stats.kl_s += w * terms.kl_s;
      stats.kl_h += w * terms.kl_h;
      stats.kl_chain += w * terms.kl_chain;
    }
    history.push_back(stats);
    if (config.on_epoch) config.on_epoch(stats);
  }
  model.mark_trained(config.start_epoch + config.epochs);
  return history;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochStats>& stats, bool append) {
  const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw ConfigError("cannot write loss CSV " + path.string());
  os.precision(17);
  if (header) os << "epoch,loss,recon_x,recon_y,kl_s,kl_h\n";
  for (const auto& s : stats)
    os << s.epoch << ',' << s.loss << ',' << s.recon_x << ',' << s.recon_y << ',' << s.kl_s << ',' << s.kl_h << '\n';
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  KeyValues kv;
  int line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config file " + path.string());
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

}  // namespace leapt
