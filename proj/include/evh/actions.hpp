#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evh/pe.hpp"

namespace evh {

// Binary-modification actions. Each kind has a fixed discrete parameter pool
// so a (kind, param) pair is a symbol from a finite genome alphabet.
enum class ActionKind : std::uint8_t {
    AddImport,
    RenameSection,
    AppendSectionSlack,
    NewEntryPoint,
    RemoveSignature,
    StripDebug,
    Pack,
    Unpack,
    SetChecksum,
    AppendOverlay,
    NoOp,
};

inline constexpr std::size_t kActionKindCount = 11;

struct ActionDescriptor {
    ActionKind kind;
    const char* name;
    bool reversible;          // false when application excises data for good
    double weight;            // pick probability under validation weighting
    std::uint32_t param_pool_size;
};

const std::array<ActionDescriptor, kActionKindCount>& action_descriptors();
const ActionDescriptor& descriptor(ActionKind kind);
ActionKind action_kind_from_name(const std::string& name);

// True when applying this exact (kind, param) destroys bytes that no action
// sequence can restore. SetChecksum is reversible except its zeroing variant.
bool irreversible_application(ActionKind kind, std::uint32_t param);

struct ActionGene {
    ActionKind kind = ActionKind::NoOp;
    std::uint32_t param = 0;
    bool operator==(const ActionGene&) const = default;
};

struct ActionSequence {
    std::vector<ActionGene> genes;
    bool operator==(const ActionSequence&) const = default;
};

struct ApplyOutcome {
    PeFile result;
    std::vector<bool> applied;    // per position: took effect (inapplicable ones are skipped)
    std::size_t modified_bytes = 0;
    bool hit_irreversible = false;
};

enum class WeightingMode { uniform, validation };

WeightingMode weighting_mode_from_name(const std::string& name);
const char* weighting_mode_name(WeightingMode mode);

bool is_applicable(const PeFile& file, ActionKind kind, std::uint32_t param);
PeFile apply_action(const PeFile& file, ActionKind kind, std::uint32_t param);
ApplyOutcome apply_sequence(const PeFile& file, const ActionSequence& seq);

// Per-kind pick probabilities, indexed by ActionKind value; sums to 1.
std::array<double, kActionKindCount> action_weights(WeightingMode mode);

// Human-readable forms for traces and the run manifest.
std::string describe_gene(ActionGene gene);
std::string describe_sequence(const ActionSequence& seq);
std::vector<std::string> param_pool_entries(ActionKind kind);

} // namespace evh
