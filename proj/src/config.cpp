#include "evh/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evh/actions.hpp"
#include "evh/errors.hpp"

namespace evh {
namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

// Rejects keys outside `allowed`. Typo protection for every level.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

double get_num(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

std::uint64_t get_u64(const json& j, const char* key, std::uint64_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

DetectorConfig parse_detector(const json& j) {
  require_object(j, "detector");
  check_keys(j, {"k", "embed_dim", "conv_filters", "kernel_size", "stride", "hidden_units", "threshold"},
             "detector");
  DetectorConfig c;
  c.k = get_size(j, "k", c.k, "detector");
  c.embed_dim = get_size(j, "embed_dim", c.embed_dim, "detector");
  c.conv_filters = get_size(j, "conv_filters", c.conv_filters, "detector");
  c.kernel_size = get_size(j, "kernel_size", c.kernel_size, "detector");
  c.stride = get_size(j, "stride", c.stride, "detector");
  c.hidden_units = get_size(j, "hidden_units", c.hidden_units, "detector");
  c.threshold = get_num(j, "threshold", c.threshold, "detector");
  return c;
}

TrainConfig parse_train(const json& j) {
  require_object(j, "train");
  check_keys(j, {"learning_rate", "epochs", "batch_size", "seed", "init_scale"}, "train");
  TrainConfig c;
  c.learning_rate = get_num(j, "learning_rate", c.learning_rate, "train");
  c.epochs = get_size(j, "epochs", c.epochs, "train");
  c.batch_size = get_size(j, "batch_size", c.batch_size, "train");
  c.seed = get_u64(j, "seed", c.seed, "train");
  c.init_scale = get_num(j, "init_scale", c.init_scale, "train");
  return c;
}

EvoConfig parse_evolution(const json& j) {
  require_object(j, "evolution");
  check_keys(j,
             {"population_size", "pool_size", "score_threshold", "generation_limit", "shuffle_prob",
              "replace_prob", "crossover_prob", "weighting_mode", "seed", "sequence_length"},
             "evolution");
  EvoConfig c;
  c.population_size = get_size(j, "population_size", c.population_size, "evolution");
  c.pool_size = get_size(j, "pool_size", c.pool_size, "evolution");
  c.score_threshold = get_num(j, "score_threshold", c.score_threshold, "evolution");
  c.generation_limit = get_size(j, "generation_limit", c.generation_limit, "evolution");
  c.shuffle_prob = get_num(j, "shuffle_prob", c.shuffle_prob, "evolution");
  c.replace_prob = get_num(j, "replace_prob", c.replace_prob, "evolution");
  c.crossover_prob = get_num(j, "crossover_prob", c.crossover_prob, "evolution");
  c.seed = get_u64(j, "seed", c.seed, "evolution");
  c.sequence_length = get_size(j, "sequence_length", c.sequence_length, "evolution");
  const std::string mode = get_str(j, "weighting_mode", weighting_mode_name(c.weighting_mode), "evolution");
  c.weighting_mode = weighting_mode_from_name(mode);
  return c;
}

CorpusConfig parse_corpus(const json& j) {
  require_object(j, "corpus");
  check_keys(j,
             {"n_malware", "n_benign", "split_ratio", "holdout_malware", "seed", "sections_min",
              "sections_max", "size_min", "size_max", "signal_strength"},
             "corpus");
  CorpusConfig c;
  c.n_malware = get_size(j, "n_malware", c.n_malware, "corpus");
  c.n_benign = get_size(j, "n_benign", c.n_benign, "corpus");
  c.split_ratio = get_num(j, "split_ratio", c.split_ratio, "corpus");
  c.holdout_malware = get_size(j, "holdout_malware", c.holdout_malware, "corpus");
  c.seed = get_u64(j, "seed", c.seed, "corpus");
  c.sections_min = get_size(j, "sections_min", c.sections_min, "corpus");
  c.sections_max = get_size(j, "sections_max", c.sections_max, "corpus");
  c.size_min = get_size(j, "size_min", c.size_min, "corpus");
  c.size_max = get_size(j, "size_max", c.size_max, "corpus");
  c.signal_strength = get_num(j, "signal_strength", c.signal_strength, "corpus");
  return c;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(j, "config");
  check_keys(j, {"cycles", "master_seed", "output_dir", "detector", "train", "evolution", "corpus"},
             "config");
  ExperimentConfig cfg;
  cfg.cycles = get_size(j, "cycles", cfg.cycles, "config");
  cfg.master_seed = get_u64(j, "master_seed", cfg.master_seed, "config");
  cfg.output_dir = get_str(j, "output_dir", cfg.output_dir, "config");
  if (j.contains("detector")) cfg.detector = parse_detector(j.at("detector"));
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("evolution")) cfg.evo = parse_evolution(j.at("evolution"));
  if (j.contains("corpus")) cfg.corpus = parse_corpus(j.at("corpus"));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["cycles"] = cfg.cycles;
  j["master_seed"] = cfg.master_seed;
  j["output_dir"] = cfg.output_dir;
  j["detector"] = {
      {"k", cfg.detector.k},
      {"embed_dim", cfg.detector.embed_dim},
      {"conv_filters", cfg.detector.conv_filters},
      {"kernel_size", cfg.detector.kernel_size},
      {"stride", cfg.detector.stride},
      {"hidden_units", cfg.detector.hidden_units},
      {"threshold", cfg.detector.threshold},
  };
  j["train"] = {
      {"learning_rate", cfg.train.learning_rate},
      {"epochs", cfg.train.epochs},
      {"batch_size", cfg.train.batch_size},
      {"seed", cfg.train.seed},
      {"init_scale", cfg.train.init_scale},
  };
  j["evolution"] = {
      {"population_size", cfg.evo.population_size},
      {"pool_size", cfg.evo.pool_size},
      {"score_threshold", cfg.evo.score_threshold},
      {"generation_limit", cfg.evo.generation_limit},
      {"shuffle_prob", cfg.evo.shuffle_prob},
      {"replace_prob", cfg.evo.replace_prob},
      {"crossover_prob", cfg.evo.crossover_prob},
      {"weighting_mode", weighting_mode_name(cfg.evo.weighting_mode)},
      {"seed", cfg.evo.seed},
      {"sequence_length", cfg.evo.sequence_length},
  };
  j["corpus"] = {
      {"n_malware", cfg.corpus.n_malware},
      {"n_benign", cfg.corpus.n_benign},
      {"split_ratio", cfg.corpus.split_ratio},
      {"holdout_malware", cfg.corpus.holdout_malware},
      {"seed", cfg.corpus.seed},
      {"sections_min", cfg.corpus.sections_min},
      {"sections_max", cfg.corpus.sections_max},
      {"size_min", cfg.corpus.size_min},
      {"size_max", cfg.corpus.size_max},
      {"signal_strength", cfg.corpus.signal_strength},
  };
  return j.dump(2) + "\n";
}

void save_resolved_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write resolved config: " + path);
  out << resolved_config_json(cfg);
}

std::string action_pools_json() {
  json pools = json::array();
  for (const ActionDescriptor& d : action_descriptors()) {
    json entry;
    entry["action"] = d.name;
    entry["reversible"] = d.reversible;
    entry["uniform_weight"] = action_weights(WeightingMode::uniform)[static_cast<std::size_t>(d.kind)];
    entry["validation_weight"] =
        action_weights(WeightingMode::validation)[static_cast<std::size_t>(d.kind)];
    entry["params"] = param_pool_entries(d.kind);
    pools.push_back(entry);
  }
  json j;
  j["action_pools"] = pools;
  return j.dump(2) + "\n";
}

void save_action_pools(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write action pool manifest: " + path);
  out << action_pools_json();
}

}  // namespace evh
