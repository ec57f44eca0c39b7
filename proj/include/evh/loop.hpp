#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evh/corpus.hpp"
#include "evh/detector.hpp"
#include "evh/evolution.hpp"

namespace evh {

struct ExperimentConfig {
    std::size_t cycles = 3;
    DetectorConfig detector;
    TrainConfig train;
    EvoConfig evo;
    CorpusConfig corpus;
    std::string output_dir = "out";
    std::uint64_t master_seed = 1;

    void validate() const;
};

struct CycleReport {
    std::size_t cycle_index = 0;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    double evasion_rate_before = 0.0;   // of the added set, against the evolved-against weights
    double evasion_rate_after = 0.0;    // same set against the retrained weights
    std::size_t evolved_added = 0;
    double mean_modified_bytes = 0.0;
    std::size_t dead_species_count = 0; // best irreversible yet not evading
    double mixture_accuracy = 0.0;      // validation plus all evolved variants so far
};

struct LoopState {
    DetectorWeights weights;
    std::vector<LabeledSample> training;
    std::vector<Bytes> evolved_all;     // every variant added across cycles
};

struct BucketRow {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double ea_accuracy = 0.0;      // nan when the bucket is empty
    double random_accuracy = 0.0;
};

struct ExperimentResult {
    std::vector<CycleReport> reports;              // [0] is the pre-cycle baseline
    std::vector<DetectorWeights> snapshots;        // weights after each report
    std::vector<std::vector<Bytes>> evolved_per_cycle;
    std::vector<double> fixed_mixture;             // final mixture set scored per snapshot
    std::vector<double> ea_best_fitness;           // first cycle, per detected sample
    std::vector<double> random_best_fitness;
    std::vector<BucketRow> bytes_table;
};

// One train -> evolve -> augment -> retrain -> measure pass. Mutates state,
// optionally hands back the raw evolution results and the added variants.
CycleReport run_cycle(LoopState& state, const ExperimentConfig& cfg, std::size_t cycle_index,
                      const std::vector<LabeledSample>& validation,
                      const std::vector<LabeledSample>& holdout,
                      std::vector<EvolutionResult>* out_results = nullptr,
                      std::vector<Bytes>* out_evolved = nullptr);

// validation accuracy minus holdout accuracy; throws OverlapDetected when the
// two sets share file content.
double overfit_check(const DetectorWeights& weights, const std::vector<LabeledSample>& validation,
                     const std::vector<LabeledSample>& holdout);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& corpus_dir);

} // namespace evh
