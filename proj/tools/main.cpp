#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "evh/actions.hpp"
#include "evh/config.hpp"
#include "evh/corpus.hpp"
#include "evh/detector.hpp"
#include "evh/errors.hpp"
#include "evh/evolution.hpp"
#include "evh/loop.hpp"
#include "evh/pe.hpp"

namespace {

// Exit codes, fixed across releases: 0 ok, 2 bad config, 3 corpus
// generation failed, 4 training diverged, 5 sample not detected,
// 6 report inputs missing. Everything else is 1.
constexpr int kExitConfig = 2;
constexpr int kExitGenerate = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitNotDetected = 5;
constexpr int kExitNoTraces = 6;

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  return evh::Rng::derive(parts).next();
}

evh::ExperimentConfig load_or_die(const std::string& path) {
  try {
    return evh::load_config(path);
  } catch (const evh::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    std::exit(kExitConfig);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw evh::Error("missing " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) rows.push_back(split_csv_line(line));
  }
  return rows;
}

int cmd_gen_corpus(const std::string& config_path, const std::string& out_dir) {
  const evh::ExperimentConfig cfg = load_or_die(config_path);
  try {
    const evh::CorpusManifest manifest = evh::generate_corpus(cfg.corpus, out_dir);
    evh::save_resolved_config(out_dir + "/resolved_config.json", cfg);
    evh::save_action_pools(out_dir + "/action_pools.json");
    std::size_t train = 0, val = 0, hold = 0;
    for (const auto& e : manifest.entries) {
      if (e.split == "train") ++train;
      else if (e.split == "validation") ++val;
      else if (e.split == "holdout") ++hold;
    }
    std::printf("generated %zu files in %s (train %zu, validation %zu, holdout %zu)\n",
                manifest.entries.size(), out_dir.c_str(), train, val, hold);
    return 0;
  } catch (const evh::Error& e) {
    std::fprintf(stderr, "corpus generation failed: %s\n", e.what());
    return kExitGenerate;
  }
}

int cmd_train(const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_path) {
  const evh::ExperimentConfig cfg = load_or_die(config_path);
  try {
    const evh::CorpusManifest manifest = evh::load_manifest(corpus_dir + "/manifest.csv");
    const auto training = evh::load_split(manifest, corpus_dir, "train");
    const auto validation = evh::load_split(manifest, corpus_dir, "validation");

    // Same seed derivation as the full loop, so the weights written here
    // equal the loop's cycle-0 snapshot for the same config and corpus.
    evh::DetectorWeights w = evh::DetectorWeights::xavier(
        cfg.detector, derive_seed({cfg.master_seed, 0xD1}), cfg.train.init_scale);
    evh::TrainConfig tc = cfg.train;
    tc.seed = derive_seed({cfg.master_seed, 0xD2});
    w = evh::train(w, training, tc);

    std::printf("train accuracy %.6f\n", evh::evaluate(w, training).accuracy);
    std::printf("validation accuracy %.6f\n", evh::evaluate(w, validation).accuracy);
    evh::save_weights(out_path, w);
    evh::save_resolved_config(out_path + ".config.json", cfg);
    std::printf("weights written to %s\n", out_path.c_str());
    return 0;
  } catch (const evh::DivergedLoss& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const evh::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_evolve(const std::string& config_path, const std::string& weights_path,
               const std::string& sample_path) {
  const evh::ExperimentConfig cfg = load_or_die(config_path);
  try {
    const evh::DetectorWeights w = evh::load_weights(weights_path);
    const evh::Bytes raw = evh::read_file(sample_path);
    const evh::PeFile pe = evh::parse_pe(raw);

    const double score = evh::score_bytes(w, raw);
    std::printf("initial score %.6f\n", score);
    if (!(score < cfg.detector.threshold)) {
      std::fprintf(stderr, "sample is not detected as malware; nothing to evade\n");
      return kExitNotDetected;
    }

    const evh::EvolutionResult res = evh::evolve_for_sample(pe, w, cfg.evo, 0);
    for (std::size_t s = 0; s < res.history.size(); ++s) {
      std::printf("stage %zu best fitness %.6f\n", s, res.history[s]);
    }
    std::printf("evaluations used: %zu\n", res.evaluations_used);
    std::printf("best sequence: %s\n", evh::describe_sequence(res.best.sequence).c_str());
    std::printf("modified bytes: %zu, evaded: %s\n", res.best.modified_bytes,
                res.evaded ? "yes" : "no");

    const evh::ApplyOutcome outcome = evh::apply_sequence(pe, res.best.sequence);
    const std::string out_path = sample_path + ".evolved";
    evh::write_file(out_path, evh::serialize_pe(outcome.result));
    evh::save_resolved_config(out_path + ".config.json", cfg);
    std::printf("modified binary written to %s\n", out_path.c_str());
    return 0;
  } catch (const evh::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_loop(const std::string& config_path, const std::string& corpus_dir,
             const std::string& out_dir) {
  evh::ExperimentConfig cfg = load_or_die(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  try {
    std::filesystem::create_directories(cfg.output_dir);
    evh::save_resolved_config(cfg.output_dir + "/resolved_config.json", cfg);
    evh::save_action_pools(cfg.output_dir + "/action_pools.json");

    const evh::ExperimentResult result = evh::run_experiment(cfg, corpus_dir);
    for (const evh::CycleReport& r : result.reports) {
      std::printf(
          "cycle %zu: train %.4f validation %.4f holdout %.4f evasion %.4f -> %.4f "
          "added %zu dead %zu mixture %.4f\n",
          r.cycle_index, r.train_accuracy, r.validation_accuracy, r.holdout_accuracy,
          r.evasion_rate_before, r.evasion_rate_after, r.evolved_added, r.dead_species_count,
          r.mixture_accuracy);
    }
    std::printf("artifacts in %s\n", cfg.output_dir.c_str());
    return 0;
  } catch (const evh::DivergedLoss& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const evh::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_report(const std::string& out_dir) {
  std::vector<std::vector<std::string>> trace;
  try {
    trace = read_csv(out_dir + "/evolution_trace.csv");
  } catch (const evh::Error&) {
    std::fprintf(stderr, "no evolution trace in %s\n", out_dir.c_str());
    return kExitNoTraces;
  }
  if (trace.size() < 2) {
    std::fprintf(stderr, "evolution trace in %s is empty\n", out_dir.c_str());
    return kExitNoTraces;
  }

  // Final-stage fitness per (cycle, sample): later rows overwrite earlier.
  std::map<std::size_t, std::map<std::string, double>> final_fitness;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& row = trace[i];
    if (row.size() != 6) continue;
    final_fitness[std::stoull(row[0])][row[1]] = std::stod(row[3]);
  }
  if (final_fitness.empty()) {
    std::fprintf(stderr, "evolution trace in %s has no data rows\n", out_dir.c_str());
    return kExitNoTraces;
  }

  std::ostringstream table1;
  table1 << "cycle,validation_accuracy,holdout_accuracy,mixture_accuracy,"
            "mean_best_fitness,evaded_fraction\n";
  for (const auto& [cycle, by_sample] : final_fitness) {
    std::vector<std::vector<std::string>> cyc;
    try {
      cyc = read_csv(out_dir + "/cycle_" + std::to_string(cycle) + ".csv");
    } catch (const evh::Error&) {
      std::fprintf(stderr, "missing cycle_%zu.csv in %s\n", cycle, out_dir.c_str());
      return kExitNoTraces;
    }
    if (cyc.size() < 2 || cyc[1].size() < 10) {
      std::fprintf(stderr, "cycle_%zu.csv in %s is malformed\n", cycle, out_dir.c_str());
      return kExitNoTraces;
    }
    double sum = 0.0;
    std::size_t evaded = 0;
    for (const auto& [id, fit] : by_sample) {
      (void)id;
      sum += fit;
      if (fit > 0.5) ++evaded;
    }
    const double n = static_cast<double>(by_sample.size());
    char line[256];
    std::snprintf(line, sizeof(line), "%zu,%s,%s,%s,%.10g,%.10g\n", cycle, cyc[1][2].c_str(),
                  cyc[1][3].c_str(), cyc[1][9].c_str(), sum / n,
                  static_cast<double>(evaded) / n);
    table1 << line;
  }

  std::vector<std::vector<std::string>> bytes_rows;
  try {
    bytes_rows = read_csv(out_dir + "/bytes_vs_accuracy.csv");
  } catch (const evh::Error&) {
    std::fprintf(stderr, "no bytes_vs_accuracy.csv in %s\n", out_dir.c_str());
    return kExitNoTraces;
  }
  std::ostringstream table2;
  for (const auto& row : bytes_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) table2 << (i ? "," : "") << row[i];
    table2 << "\n";
  }

  std::printf("detector accuracy by retrain cycle\n%s\n", table1.str().c_str());
  std::printf("detection accuracy by modified-byte bucket\n%s", table2.str().c_str());

  std::ofstream t1(out_dir + "/accuracy_by_cycle.csv", std::ios::binary);
  t1 << table1.str();
  std::ofstream t2(out_dir + "/accuracy_by_bytes.csv", std::ios::binary);
  t2 << table2.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial hardening loop for synthetic PE binaries"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = library default)");

  std::string config_path, corpus_dir, out_path, weights_path, sample_path;

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a labeled synthetic PE corpus");
  gen->add_option("--config", config_path, "run config JSON")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train the detector on a corpus");
  tr->add_option("--config", config_path, "run config JSON")->required();
  tr->add_option("--corpus", corpus_dir, "corpus directory with manifest.csv")->required();
  tr->add_option("--out", out_path, "weights output file")->required();

  CLI::App* ev = app.add_subcommand("evolve", "evolve an evasive variant of one sample");
  ev->add_option("--config", config_path, "run config JSON")->required();
  ev->add_option("--weights", weights_path, "detector weights file")->required();
  ev->add_option("--sample", sample_path, "PE file to modify")->required();

  CLI::App* lp = app.add_subcommand("loop", "run the full evolve/retrain experiment");
  lp->add_option("--config", config_path, "run config JSON")->required();
  lp->add_option("--corpus", corpus_dir, "corpus directory with manifest.csv")->required();
  lp->add_option("--out", out_path, "output directory (overrides config output_dir)");

  CLI::App* rp = app.add_subcommand("report", "aggregate loop artifacts into summary tables");
  rp->add_option("--out", out_path, "loop output directory")->required();

  CLI11_PARSE(app, argc, argv);
  set_threads(threads);

  if (gen->parsed()) return cmd_gen_corpus(config_path, out_path);
  if (tr->parsed()) return cmd_train(config_path, corpus_dir, out_path);
  if (ev->parsed()) return cmd_evolve(config_path, weights_path, sample_path);
  if (lp->parsed()) return cmd_loop(config_path, corpus_dir, out_path);
  if (rp->parsed()) return cmd_report(out_path);
  return 1;
}
