#include "evh/loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace evh {

namespace {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    return Rng::derive(parts).next();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

double evading_fraction(const DetectorWeights& w, const std::vector<Bytes>& files) {
    if (files.empty()) return 0.0;
    const auto scores = score_files(w, files);
    std::size_t n = 0;
    for (double s : scores)
        if (s > w.cfg.threshold) ++n;
    return static_cast<double>(n) / files.size();
}

double mixture_accuracy_of(const DetectorWeights& w, const std::vector<LabeledSample>& validation,
                           const std::vector<Bytes>& evolved) {
    std::vector<LabeledSample> mix = validation;
    for (const Bytes& b : evolved) mix.push_back({b, 0});
    return mix.empty() ? 0.0 : evaluate(w, mix).accuracy;
}

void write_cycle_csv(const std::string& dir, const CycleReport& r) {
    const std::string path = dir + "/cycle_" + std::to_string(r.cycle_index) + ".csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << "cycle_index,train_accuracy,validation_accuracy,holdout_accuracy,"
         "evasion_rate_before,evasion_rate_after,evolved_added,mean_modified_bytes,"
         "dead_species_count,mixture_accuracy\n";
    f << r.cycle_index << "," << fmt(r.train_accuracy) << "," << fmt(r.validation_accuracy) << ","
      << fmt(r.holdout_accuracy) << "," << fmt(r.evasion_rate_before) << ","
      << fmt(r.evasion_rate_after) << "," << r.evolved_added << ","
      << fmt(r.mean_modified_bytes) << "," << r.dead_species_count << ","
      << fmt(r.mixture_accuracy) << "\n";
}

} // namespace

void ExperimentConfig::validate() const {
    if (cycles == 0) throw ConfigError("cycle count must be at least 1");
    detector.validate();
    evo.validate();
    corpus.validate();
}

CycleReport run_cycle(LoopState& state, const ExperimentConfig& cfg, std::size_t cycle_index,
                      const std::vector<LabeledSample>& validation,
                      const std::vector<LabeledSample>& holdout,
                      std::vector<EvolutionResult>* out_results,
                      std::vector<Bytes>* out_evolved) {
    const EvalResult train_eval = evaluate(state.weights, state.training);
    if (train_eval.detected_malware.empty())
        throw NoDetectedMalware();

    std::vector<PeFile> parsed;
    std::vector<const PeFile*> samples;
    std::vector<std::uint64_t> ids;
    parsed.reserve(train_eval.detected_malware.size());
    for (std::size_t idx : train_eval.detected_malware) {
        parsed.push_back(parse_pe(state.training[idx].data));
        ids.push_back(idx);
    }
    for (const PeFile& p : parsed) samples.push_back(&p);

    EvoConfig evo = cfg.evo;
    evo.seed = derive_seed({cfg.master_seed, 0xE0, cycle_index});
    std::vector<EvolutionResult> results = evolve_corpus(samples, ids, state.weights, evo);

    CycleReport r;
    r.cycle_index = cycle_index;

    std::vector<Bytes> added;
    double bytes_sum = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const EvolutionResult& res = results[i];
        if (res.best.hit_irreversible && !res.evaded) ++r.dead_species_count;
        if (!res.evaded) continue;
        ApplyOutcome outcome = apply_sequence(parsed[i], res.best.sequence);
        added.push_back(serialize_pe(outcome.result));
        bytes_sum += static_cast<double>(res.best.modified_bytes);
    }
    r.evolved_added = added.size();
    r.mean_modified_bytes = added.empty() ? 0.0 : bytes_sum / added.size();
    r.evasion_rate_before = evading_fraction(state.weights, added);

    for (const Bytes& b : added) state.training.push_back({b, 0});
    state.evolved_all.insert(state.evolved_all.end(), added.begin(), added.end());

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed({cfg.master_seed, 0xD3, cycle_index});
    state.weights = train(state.weights, state.training, tc);

    r.train_accuracy = evaluate(state.weights, state.training).accuracy;
    r.validation_accuracy = evaluate(state.weights, validation).accuracy;
    r.holdout_accuracy = holdout.empty() ? 0.0 : evaluate(state.weights, holdout).accuracy;
    r.evasion_rate_after = evading_fraction(state.weights, added);
    r.mixture_accuracy = mixture_accuracy_of(state.weights, validation, state.evolved_all);

    if (out_results) *out_results = std::move(results);
    if (out_evolved) *out_evolved = std::move(added);
    return r;
}

double overfit_check(const DetectorWeights& weights, const std::vector<LabeledSample>& validation,
                     const std::vector<LabeledSample>& holdout) {
    std::set<std::uint64_t> val_digests;
    for (const auto& s : validation) val_digests.insert(fnv1a64(s.data));
    for (const auto& s : holdout)
        if (val_digests.count(fnv1a64(s.data)))
            throw OverlapDetected("holdout sample also present in validation");
    const double val = validation.empty() ? 0.0 : evaluate(weights, validation).accuracy;
    const double hold = holdout.empty() ? 0.0 : evaluate(weights, holdout).accuracy;
    return val - hold;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& corpus_dir) {
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);

    const CorpusManifest manifest = load_manifest(corpus_dir + "/manifest.csv");
    LoopState state;
    state.training = load_split(manifest, corpus_dir, "train");
    const auto validation = load_split(manifest, corpus_dir, "validation");
    const auto holdout = load_split(manifest, corpus_dir, "holdout");

    state.weights = DetectorWeights::xavier(cfg.detector, derive_seed({cfg.master_seed, 0xD1}),
                                            cfg.train.init_scale);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed({cfg.master_seed, 0xD2});
    state.weights = train(state.weights, state.training, tc);

    ExperimentResult out;

    CycleReport base;
    base.cycle_index = 0;
    base.train_accuracy = evaluate(state.weights, state.training).accuracy;
    base.validation_accuracy = evaluate(state.weights, validation).accuracy;
    base.holdout_accuracy = holdout.empty() ? 0.0 : evaluate(state.weights, holdout).accuracy;
    base.mixture_accuracy = base.validation_accuracy;
    out.reports.push_back(base);
    out.snapshots.push_back(state.weights);
    write_cycle_csv(cfg.output_dir, base);
    save_weights(cfg.output_dir + "/weights_cycle_0.bin", state.weights);

    std::ofstream trace(cfg.output_dir + "/evolution_trace.csv", std::ios::binary);
    if (!trace) throw Error("cannot write evolution trace");
    trace << "cycle,sample_id,generation,best_fitness,modified_bytes,hit_irreversible\n";

    // Material for the modified-bytes table: first-cycle attack output plus an
    // equal-budget random baseline, scored later under the final weights.
    std::vector<std::pair<std::size_t, Bytes>> ea_files, random_files;

    for (std::size_t cycle = 1; cycle <= cfg.cycles; ++cycle) {
        std::vector<EvolutionResult> results;
        std::vector<Bytes> added;
        CycleReport r;
        try {
            r = run_cycle(state, cfg, cycle, validation, holdout, &results, &added);
        } catch (const NoDetectedMalware&) {
            break;  // nothing left to evolve: the loop has converged
        }
        out.reports.push_back(r);
        out.snapshots.push_back(state.weights);
        out.evolved_per_cycle.push_back(added);
        write_cycle_csv(cfg.output_dir, r);
        save_weights(cfg.output_dir + "/weights_cycle_" + std::to_string(cycle) + ".bin",
                     state.weights);

        for (const EvolutionResult& res : results) {
            for (std::size_t s = 0; s < res.history.size(); ++s)
                trace << cycle << "," << res.sample_id << "," << s << ","
                      << fmt(res.history[s]) << "," << res.stage_best[s].modified_bytes << ","
                      << (res.stage_best[s].hit_irreversible ? 1 : 0) << "\n";
        }
        trace.flush();

        if (cycle == 1) {
            // The evolution results already carry the EA side; rerun the same
            // samples with random search at the same budget.
            EvoConfig evo = cfg.evo;
            evo.seed = derive_seed({cfg.master_seed, 0xBA});
            const std::size_t budget =
                cfg.evo.population_size + cfg.evo.generation_limit * cfg.evo.pool_size;
            for (const EvolutionResult& res : results) {
                const PeFile sample = parse_pe(state.training[res.sample_id].data);
                EvolutionResult rnd =
                    random_search_baseline(sample, out.snapshots[0], evo, budget, res.sample_id);
                out.ea_best_fitness.push_back(res.best.fitness);
                out.random_best_fitness.push_back(rnd.best.fitness);
                ApplyOutcome ea_out = apply_sequence(sample, res.best.sequence);
                ApplyOutcome rnd_out = apply_sequence(sample, rnd.best.sequence);
                ea_files.emplace_back(ea_out.modified_bytes, serialize_pe(ea_out.result));
                random_files.emplace_back(rnd_out.modified_bytes, serialize_pe(rnd_out.result));
            }
        }
    }

    // Retrospective mixture curve: the final clean+evolved set scored under
    // every snapshot, so cycles are compared on one fixed set.
    for (const DetectorWeights& w : out.snapshots)
        out.fixed_mixture.push_back(mixture_accuracy_of(w, validation, state.evolved_all));

    const std::size_t edges[] = {0, 64, 256, 1024, 4096, 16384, 65536, SIZE_MAX};
    auto bucket_accuracy = [&](const std::vector<std::pair<std::size_t, Bytes>>& files,
                               std::size_t lo, std::size_t hi) {
        std::size_t total = 0, caught = 0;
        for (const auto& [bytes, content] : files) {
            if (bytes < lo || bytes >= hi) continue;
            ++total;
            if (score_bytes(state.weights, content) < state.weights.cfg.threshold) ++caught;
        }
        return total == 0 ? std::nan("") : static_cast<double>(caught) / total;
    };
    {
        std::ofstream f(cfg.output_dir + "/bytes_vs_accuracy.csv", std::ios::binary);
        if (!f) throw Error("cannot write bytes_vs_accuracy.csv");
        f << "bucket_lo,bucket_hi,ea_accuracy,random_accuracy\n";
        for (std::size_t b = 0; b + 1 < std::size(edges); ++b) {
            BucketRow row;
            row.lo = edges[b];
            row.hi = edges[b + 1];
            row.ea_accuracy = bucket_accuracy(ea_files, row.lo, row.hi);
            row.random_accuracy = bucket_accuracy(random_files, row.lo, row.hi);
            out.bytes_table.push_back(row);
            f << row.lo << "," << (row.hi == SIZE_MAX ? 4294967296ull : row.hi) << ","
              << (std::isnan(row.ea_accuracy) ? "nan" : fmt(row.ea_accuracy)) << ","
              << (std::isnan(row.random_accuracy) ? "nan" : fmt(row.random_accuracy)) << "\n";
        }
    }

    {
        std::ofstream f(cfg.output_dir + "/fixed_mixture.csv", std::ios::binary);
        if (!f) throw Error("cannot write fixed_mixture.csv");
        f << "snapshot,accuracy\n";
        for (std::size_t i = 0; i < out.fixed_mixture.size(); ++i)
            f << i << "," << fmt(out.fixed_mixture[i]) << "\n";
    }

    {
        std::ofstream f(cfg.output_dir + "/ea_vs_random.csv", std::ios::binary);
        if (!f) throw Error("cannot write ea_vs_random.csv");
        f << "index,ea_best_fitness,random_best_fitness\n";
        for (std::size_t i = 0; i < out.ea_best_fitness.size(); ++i)
            f << i << "," << fmt(out.ea_best_fitness[i]) << ","
              << fmt(out.random_best_fitness[i]) << "\n";
    }

    {
        // How well the first crop of evaders survives the hardened detector.
        const std::vector<Bytes>* first =
            out.evolved_per_cycle.empty() ? nullptr : &out.evolved_per_cycle.front();
        const double vs_attacked =
            first ? evading_fraction(out.snapshots[0], *first) : std::nan("");
        const double vs_final = first ? evading_fraction(state.weights, *first) : std::nan("");
        const double drop =
            (first && vs_attacked > 0.0) ? (vs_attacked - vs_final) / vs_attacked : std::nan("");
        std::ofstream f(cfg.output_dir + "/hardening_summary.csv", std::ios::binary);
        if (!f) throw Error("cannot write hardening_summary.csv");
        f << "first_cycle_evolved,evasion_vs_attacked_detector,evasion_vs_final_detector,"
             "relative_drop\n";
        f << (first ? first->size() : 0) << ","
          << (std::isnan(vs_attacked) ? "nan" : fmt(vs_attacked)) << ","
          << (std::isnan(vs_final) ? "nan" : fmt(vs_final)) << ","
          << (std::isnan(drop) ? "nan" : fmt(drop)) << "\n";
    }

    return out;
}

} // namespace evh
