#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evh/detector.hpp"
#include "evh/pe.hpp"

namespace evh {

struct CorpusConfig {
    std::size_t n_malware = 400;
    std::size_t n_benign = 400;
    double split_ratio = 0.9;
    std::size_t holdout_malware = 100;
    std::uint64_t seed = 1;
    std::size_t sections_min = 5;
    std::size_t sections_max = 5;
    std::size_t size_min = 3072;      // payload budget per file
    std::size_t size_max = 16384;
    double signal_strength = 0.05;    // density of class motifs among noise blocks

    void validate() const;
};

struct ManifestEntry {
    std::string path;      // relative to the manifest's directory
    int label = 0;         // 0 malware, 1 benign
    std::string split;     // none | train | validation | holdout
    std::uint64_t digest = 0;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;
};

// Deterministic sample synthesis: (cfg.seed, id, label) fixes every byte.
PeFile generate_sample(const CorpusConfig& cfg, std::uint64_t id, int label);

// Writes all files plus manifest.csv into out_dir; entries carry splits.
CorpusManifest generate_corpus(const CorpusConfig& cfg, const std::string& out_dir);

CorpusManifest split_corpus(const CorpusManifest& manifest, double ratio,
                            std::size_t holdout_malware, std::uint64_t seed);

void save_manifest(const std::string& path, const CorpusManifest& manifest);
CorpusManifest load_manifest(const std::string& path);

// Loads files for one split ("" = all), verifying digests against disk.
std::vector<LabeledSample> load_split(const CorpusManifest& manifest, const std::string& dir,
                                      const std::string& split);

} // namespace evh
