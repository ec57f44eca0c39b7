#pragma once

#include <cstdint>
#include <vector>

#include "evh/actions.hpp"
#include "evh/detector.hpp"
#include "evh/rng.hpp"

namespace evh {

struct EvoConfig {
    std::size_t population_size = 16;      // S
    std::size_t pool_size = 48;            // L
    double score_threshold = 0.5 + 1e-6;   // E: stop once the best reaches this
    std::size_t generation_limit = 10;     // G
    double shuffle_prob = 0.2;
    double replace_prob = 0.1;
    double crossover_prob = 0.9;
    WeightingMode weighting_mode = WeightingMode::uniform;
    std::uint64_t seed = 1;
    std::size_t sequence_length = 8;

    // Restricted alphabets for small exhaustive instances: which kinds may
    // appear, and an optional per-kind cap on the parameter pool (0 = full).
    std::vector<ActionKind> allowed_kinds;
    std::vector<std::uint32_t> param_caps;

    void validate() const;
    std::uint32_t pool_cap(std::size_t allowed_index) const;
};

struct Individual {
    ActionSequence sequence;
    double fitness = 0.0;
    std::size_t modified_bytes = 0;
    bool hit_irreversible = false;
    bool nonviable = false;   // evaluation hit a layout error; fitness forced to 0
};

struct EvolutionResult {
    std::uint64_t sample_id = 0;
    Individual best;
    std::vector<double> history;          // running-max fitness, one entry per stage
    std::vector<Individual> stage_best;   // running best at the same stages
    std::size_t evaluations_used = 0;
    bool evaded = false;                  // best fitness crossed the 0.5 boundary
};

ActionGene random_gene(const EvoConfig& cfg, Rng& rng);
std::vector<ActionSequence> init_population(const EvoConfig& cfg, Rng& rng);
ActionSequence mutate(const ActionSequence& seq, const EvoConfig& cfg, Rng& rng);
ActionSequence crossover(const ActionSequence& a, const ActionSequence& b, const EvoConfig& cfg,
                         Rng& rng);

Individual evaluate_individual(const PeFile& sample, const ActionSequence& seq,
                               const DetectorWeights& weights);

EvolutionResult evolve_for_sample(const PeFile& sample, const DetectorWeights& weights,
                                  const EvoConfig& cfg, std::uint64_t sample_id = 0);

EvolutionResult random_search_baseline(const PeFile& sample, const DetectorWeights& weights,
                                       const EvoConfig& cfg, std::size_t budget,
                                       std::uint64_t sample_id = 0);

std::vector<EvolutionResult> evolve_corpus(const std::vector<const PeFile*>& samples,
                                           const std::vector<std::uint64_t>& sample_ids,
                                           const DetectorWeights& weights, const EvoConfig& cfg);

} // namespace evh
