#include "evh/evolution.hpp"

#include <algorithm>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evh {

namespace {

// Stream tags so every draw site has its own derived generator.
constexpr std::uint64_t kTagInit = 0xA111C3;
constexpr std::uint64_t kTagChild = 0xC411D;
constexpr std::uint64_t kTagRandom = 0x5A3D;

std::vector<ActionKind> default_kinds() {
    std::vector<ActionKind> out;
    for (const auto& d : action_descriptors()) out.push_back(d.kind);
    return out;
}

struct Alphabet {
    std::vector<ActionKind> kinds;
    std::vector<std::uint32_t> caps;
    std::vector<double> cumulative;  // unnormalized cumulative kind weights
    double total = 0.0;
};

Alphabet build_alphabet(const EvoConfig& cfg) {
    Alphabet a;
    a.kinds = cfg.allowed_kinds.empty() ? default_kinds() : cfg.allowed_kinds;
    const auto weights = action_weights(cfg.weighting_mode);
    for (std::size_t i = 0; i < a.kinds.size(); ++i) {
        std::uint32_t cap = descriptor(a.kinds[i]).param_pool_size;
        if (i < cfg.param_caps.size() && cfg.param_caps[i] != 0)
            cap = std::min(cap, cfg.param_caps[i]);
        a.caps.push_back(cap);
        a.total += weights[static_cast<std::size_t>(a.kinds[i])];
        a.cumulative.push_back(a.total);
    }
    return a;
}

ActionGene sample_gene(const Alphabet& a, Rng& rng) {
    const double r = rng.uniform() * a.total;
    std::size_t idx = a.kinds.size() - 1;
    for (std::size_t i = 0; i < a.cumulative.size(); ++i) {
        if (r < a.cumulative[i]) {
            idx = i;
            break;
        }
    }
    return {a.kinds[idx], rng.below(a.caps[idx])};
}

ActionSequence mutate_impl(const ActionSequence& seq, const EvoConfig& cfg, const Alphabet& a,
                           Rng& rng) {
    ActionSequence out = seq;
    for (std::size_t i = 0; i + 1 < out.genes.size(); ++i)
        if (rng.coin(cfg.shuffle_prob)) std::swap(out.genes[i], out.genes[i + 1]);
    for (std::size_t i = 0; i < out.genes.size(); ++i)
        if (rng.coin(cfg.replace_prob)) out.genes[i] = sample_gene(a, rng);
    return out;
}

// Children of one generation are independent given their derived streams, so
// they evaluate in parallel into slots; selection stays sequential.
std::vector<Individual> evaluate_all(const PeFile& sample, const DetectorWeights& weights,
                                     const std::vector<ActionSequence>& seqs) {
    std::vector<Individual> out(seqs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < seqs.size(); ++i)
        out[i] = evaluate_individual(sample, seqs[i], weights);
    return out;
}

const Individual& best_of(const std::vector<Individual>& pop) {
    std::size_t bi = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
        if (pop[i].fitness > pop[bi].fitness) bi = i;
    return pop[bi];
}

} // namespace

void EvoConfig::validate() const {
    if (population_size == 0) throw ConfigError("population size must be at least 1");
    if (pool_size < population_size) throw ConfigError("candidate pool must be at least S");
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
        throw ConfigError("score threshold must lie in [0,1]");
    if (generation_limit == 0) throw ConfigError("generation limit must be at least 1");
    for (double p : {shuffle_prob, replace_prob, crossover_prob})
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must lie in [0,1]");
    if (sequence_length == 0) throw ConfigError("sequence length must be at least 1");
    if (!param_caps.empty() && !allowed_kinds.empty() &&
        param_caps.size() != allowed_kinds.size())
        throw ConfigError("param_caps must match allowed_kinds");
}

std::uint32_t EvoConfig::pool_cap(std::size_t allowed_index) const {
    const auto kinds = allowed_kinds.empty() ? default_kinds() : allowed_kinds;
    std::uint32_t cap = descriptor(kinds.at(allowed_index)).param_pool_size;
    if (allowed_index < param_caps.size() && param_caps[allowed_index] != 0)
        cap = std::min(cap, param_caps[allowed_index]);
    return cap;
}

ActionGene random_gene(const EvoConfig& cfg, Rng& rng) {
    return sample_gene(build_alphabet(cfg), rng);
}

std::vector<ActionSequence> init_population(const EvoConfig& cfg, Rng& rng) {
    cfg.validate();
    const Alphabet a = build_alphabet(cfg);
    std::vector<ActionSequence> out(cfg.population_size);
    for (auto& seq : out) {
        seq.genes.resize(cfg.sequence_length);
        for (auto& g : seq.genes) g = sample_gene(a, rng);
    }
    return out;
}

ActionSequence mutate(const ActionSequence& seq, const EvoConfig& cfg, Rng& rng) {
    return mutate_impl(seq, cfg, build_alphabet(cfg), rng);
}

ActionSequence crossover(const ActionSequence& a, const ActionSequence& b, const EvoConfig&,
                         Rng& rng) {
    if (a.genes.size() != b.genes.size())
        throw LengthMismatch("crossover parents differ in length");
    ActionSequence out;
    out.genes.resize(a.genes.size());
    for (std::size_t i = 0; i < out.genes.size(); ++i)
        out.genes[i] = rng.coin(0.5) ? a.genes[i] : b.genes[i];
    return out;
}

Individual evaluate_individual(const PeFile& sample, const ActionSequence& seq,
                               const DetectorWeights& weights) {
    Individual ind;
    ind.sequence = seq;
    try {
        ApplyOutcome outcome = apply_sequence(sample, seq);
        const Bytes modified = serialize_pe(outcome.result);
        ind.fitness = score_bytes(weights, modified);
        ind.modified_bytes = outcome.modified_bytes;
        ind.hit_irreversible = outcome.hit_irreversible;
    } catch (const Error&) {
        ind.fitness = 0.0;
        ind.nonviable = true;
    }
    return ind;
}

EvolutionResult evolve_for_sample(const PeFile& sample, const DetectorWeights& weights,
                                  const EvoConfig& cfg, std::uint64_t sample_id) {
    cfg.validate();
    const Alphabet alpha = build_alphabet(cfg);

    Rng init_rng = Rng::derive({cfg.seed, sample_id, kTagInit});
    std::vector<ActionSequence> seqs = init_population(cfg, init_rng);
    std::vector<Individual> population = evaluate_all(sample, weights, seqs);

    EvolutionResult res;
    res.sample_id = sample_id;
    res.best = best_of(population);
    res.history.push_back(res.best.fitness);
    res.stage_best.push_back(res.best);
    res.evaluations_used = population.size();

    for (std::size_t g = 1;
         res.best.fitness < cfg.score_threshold && g <= cfg.generation_limit; ++g) {
        std::vector<ActionSequence> children(cfg.pool_size);
        for (std::size_t c = 0; c < cfg.pool_size; ++c) {
            Rng rng = Rng::derive({cfg.seed, sample_id, kTagChild, g, c});
            const ActionSequence& base =
                population[rng.below(static_cast<std::uint32_t>(population.size()))].sequence;
            ActionSequence child = rng.coin(cfg.crossover_prob)
                                       ? crossover(base, res.best.sequence, cfg, rng)
                                       : base;
            children[c] = mutate_impl(child, cfg, alpha, rng);
        }

        std::vector<Individual> pool = evaluate_all(sample, weights, children);
        res.evaluations_used += pool.size();

        // PickGoodIndividuals: keep the top S of the pool, by fitness,
        // earlier index winning ties.
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            return pool[x].fitness > pool[y].fitness;
        });
        std::vector<Individual> next;
        next.reserve(cfg.population_size);
        for (std::size_t i = 0; i < cfg.population_size && i < idx.size(); ++i)
            next.push_back(pool[idx[i]]);
        population = std::move(next);

        if (!population.empty() && population.front().fitness > res.best.fitness)
            res.best = population.front();
        res.history.push_back(res.best.fitness);
        res.stage_best.push_back(res.best);
    }

    res.evaded = res.best.fitness > 0.5;
    return res;
}

EvolutionResult random_search_baseline(const PeFile& sample, const DetectorWeights& weights,
                                       const EvoConfig& cfg, std::size_t budget,
                                       std::uint64_t sample_id) {
    cfg.validate();
    if (budget == 0) throw ConfigError("budget must be at least 1");
    const Alphabet alpha = build_alphabet(cfg);

    std::vector<ActionSequence> seqs(budget);
    for (std::size_t i = 0; i < budget; ++i) {
        Rng rng = Rng::derive({cfg.seed, sample_id, kTagRandom, i});
        seqs[i].genes.resize(cfg.sequence_length);
        for (auto& g : seqs[i].genes) g = sample_gene(alpha, rng);
    }
    std::vector<Individual> pool = evaluate_all(sample, weights, seqs);

    EvolutionResult res;
    res.sample_id = sample_id;
    res.best = pool.front();
    for (const Individual& ind : pool) {
        if (ind.fitness > res.best.fitness) res.best = ind;
        res.history.push_back(res.best.fitness);
        res.stage_best.push_back(res.best);
    }
    res.evaluations_used = budget;
    res.evaded = res.best.fitness > 0.5;
    return res;
}

std::vector<EvolutionResult> evolve_corpus(const std::vector<const PeFile*>& samples,
                                           const std::vector<std::uint64_t>& sample_ids,
                                           const DetectorWeights& weights, const EvoConfig& cfg) {
    if (samples.size() != sample_ids.size())
        throw LengthMismatch("sample list and id list differ in length");
    std::vector<EvolutionResult> out(samples.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < samples.size(); ++i)
        out[i] = evolve_for_sample(*samples[i], weights, cfg, sample_ids[i]);
    return out;
}

} // namespace evh
