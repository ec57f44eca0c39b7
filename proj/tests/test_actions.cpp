#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "evh/actions.hpp"
#include "evh/corpus.hpp"
#include "evh/errors.hpp"
#include "evh/pe.hpp"

using namespace evh;

namespace {

std::vector<PeFile> sample_files(std::uint64_t seed, std::size_t n) {
  CorpusConfig cfg;
  cfg.seed = seed;
  std::vector<PeFile> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(cfg, i, int(i % 2)));
  return out;
}

bool same_bytes(const PeFile& a, const PeFile& b) {
  return serialize_pe(a) == serialize_pe(b);
}

}  // namespace

TEST_CASE("descriptor table is closed and consistent") {
  const auto& table = action_descriptors();
  CHECK(table.size() == kActionKindCount);
  std::set<std::string> names;
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(static_cast<std::size_t>(table[i].kind) == i);
    CHECK(table[i].param_pool_size >= 1);
    CHECK(param_pool_entries(table[i].kind).size() == table[i].param_pool_size);
    names.insert(table[i].name);
    CHECK(action_kind_from_name(table[i].name) == table[i].kind);
  }
  CHECK(names.size() == kActionKindCount);
  CHECK_THROWS_AS(action_kind_from_name("NotAnAction"), ConfigError);
}

TEST_CASE("weights sum to one and separate the risky kinds") {
  for (WeightingMode mode : {WeightingMode::uniform, WeightingMode::validation}) {
    const auto w = action_weights(mode);
    double sum = 0;
    for (double v : w) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto uni = action_weights(WeightingMode::uniform);
  for (double v : uni) CHECK(v == doctest::Approx(1.0 / 11).epsilon(1e-12));

  const auto val = action_weights(WeightingMode::validation);
  const auto at = [&](ActionKind k) { return val[static_cast<std::size_t>(k)]; };
  CHECK(at(ActionKind::RemoveSignature) == doctest::Approx(0.02));
  CHECK(at(ActionKind::StripDebug) == doctest::Approx(0.02));
  CHECK(at(ActionKind::SetChecksum) == doctest::Approx(0.02));
  CHECK(at(ActionKind::Pack) > at(ActionKind::RemoveSignature));
}

TEST_CASE("irreversible applications are exactly the excising ones") {
  CHECK(irreversible_application(ActionKind::RemoveSignature, 0));
  CHECK(irreversible_application(ActionKind::StripDebug, 0));
  CHECK(irreversible_application(ActionKind::SetChecksum, 0));   // zeroing variant
  CHECK_FALSE(irreversible_application(ActionKind::SetChecksum, 1));
  CHECK_FALSE(irreversible_application(ActionKind::SetChecksum, 2));
  CHECK_FALSE(irreversible_application(ActionKind::Pack, 0));
  CHECK_FALSE(irreversible_application(ActionKind::AddImport, 0));
  CHECK_FALSE(irreversible_application(ActionKind::NoOp, 0));
}

TEST_CASE("every applicable pair yields a valid, round-trippable file") {
  const auto files = sample_files(5001, 8);
  for (const ActionDescriptor& d : action_descriptors()) {
    for (std::uint32_t p = 0; p < d.param_pool_size; ++p) {
      for (const PeFile& pe : files) {
        if (!is_applicable(pe, d.kind, p)) continue;
        const PeFile out = apply_action(pe, d.kind, p);
        const Bytes blob = serialize_pe(out);
        CHECK(serialize_pe(parse_pe(blob)) == blob);
      }
    }
  }
}

TEST_CASE("apply_action beyond the parameter pool throws") {
  const auto files = sample_files(777, 1);
  for (const ActionDescriptor& d : action_descriptors()) {
    CHECK_THROWS_AS(apply_action(files[0], d.kind, d.param_pool_size), ConfigError);
  }
}

TEST_CASE("applied flag mirrors an actual byte difference") {
  const auto files = sample_files(62, 6);
  for (const PeFile& pe : files) {
    const Bytes before = serialize_pe(pe);
    for (const ActionDescriptor& d : action_descriptors()) {
      if (d.kind == ActionKind::NoOp) continue;
      for (std::uint32_t p = 0; p < d.param_pool_size; ++p) {
        ActionSequence seq{{{d.kind, p}}};
        const ApplyOutcome out = apply_sequence(pe, seq);
        const Bytes after = serialize_pe(out.result);
        CHECK(out.applied[0] == (after != before));
        CHECK(out.modified_bytes == byte_diff_count(before, after));
      }
    }
  }
}

TEST_CASE("no-op applies everywhere and changes nothing") {
  const auto files = sample_files(63, 3);
  for (const PeFile& pe : files) {
    CHECK(is_applicable(pe, ActionKind::NoOp, 0));
    const ApplyOutcome out = apply_sequence(pe, ActionSequence{{{ActionKind::NoOp, 0}}});
    CHECK(out.applied[0]);
    CHECK(out.modified_bytes == 0);
    CHECK(same_bytes(out.result, pe));
  }
}

TEST_CASE("pack then unpack restores the file byte for byte") {
  const auto files = sample_files(64, 8);
  std::size_t packed = 0;
  for (const PeFile& pe : files) {
    if (!is_applicable(pe, ActionKind::Pack, 0)) continue;
    ++packed;
    const PeFile mid = apply_action(pe, ActionKind::Pack, 0);
    CHECK_FALSE(same_bytes(mid, pe));
    CHECK(is_applicable(mid, ActionKind::Unpack, 0));
    const PeFile back = apply_action(mid, ActionKind::Unpack, 0);
    CHECK(same_bytes(back, pe));
  }
  CHECK(packed >= 6);  // nearly every generated file accepts packing
}

TEST_CASE("pack refuses a second pass and unpack refuses unpacked input") {
  const auto files = sample_files(65, 4);
  for (const PeFile& pe : files) {
    CHECK_FALSE(is_applicable(pe, ActionKind::Unpack, 0));
    if (!is_applicable(pe, ActionKind::Pack, 0)) continue;
    const PeFile mid = apply_action(pe, ActionKind::Pack, 0);
    CHECK_FALSE(is_applicable(mid, ActionKind::Pack, 0));
  }
}

TEST_CASE("signature and debug removal are idempotent") {
  const auto files = sample_files(66, 10);
  for (const PeFile& pe : files) {
    for (ActionKind k : {ActionKind::RemoveSignature, ActionKind::StripDebug}) {
      if (!is_applicable(pe, k, 0)) continue;
      const PeFile once = apply_action(pe, k, 0);
      CHECK_FALSE(is_applicable(once, k, 0));
      const PeFile twice = apply_action(once, k, 0);
      CHECK(same_bytes(twice, once));
    }
  }
}

TEST_CASE("remove signature clears the certificate and its directory") {
  const auto files = sample_files(67, 12);
  std::size_t signed_count = 0;
  for (const PeFile& pe : files) {
    if (pe.certificate.empty()) continue;
    ++signed_count;
    const PeFile out = apply_action(pe, ActionKind::RemoveSignature, 0);
    CHECK(out.certificate.empty());
    CHECK(out.opt.dir(kDirSecurity).rva == 0);
    CHECK(out.opt.dir(kDirSecurity).size == 0);
  }
  CHECK(signed_count >= 3);
}

TEST_CASE("rename section cycles back to the original name") {
  const auto files = sample_files(68, 4);
  for (const PeFile& pe : files) {
    const std::string original = pe.sections[0].name_string();
    std::uint32_t back_param = UINT32_MAX;
    const auto pool = param_pool_entries(ActionKind::RenameSection);
    for (std::uint32_t p = 0; p < 8; ++p) {
      // params 0..7 address section 0; find the pool entry matching the
      // original name
      if (pool[p].find(original) != std::string::npos) back_param = p;
    }
    REQUIRE(back_param != UINT32_MAX);
    std::uint32_t away = (back_param + 1) % 8;
    const PeFile renamed = apply_action(pe, ActionKind::RenameSection, away);
    CHECK(renamed.sections[0].name_string() != original);
    const PeFile restored = apply_action(renamed, ActionKind::RenameSection, back_param);
    CHECK(restored.sections[0].name_string() == original);
    CHECK(same_bytes(restored, pe));
  }
}

TEST_CASE("set checksum variants write exactly the advertised value") {
  const auto files = sample_files(69, 4);
  for (const PeFile& pe : files) {
    if (is_applicable(pe, ActionKind::SetChecksum, 0)) {
      CHECK(apply_action(pe, ActionKind::SetChecksum, 0).opt.checksum() == 0);
    }
    if (is_applicable(pe, ActionKind::SetChecksum, 2)) {
      const PeFile out = apply_action(pe, ActionKind::SetChecksum, 2);
      CHECK(out.opt.checksum() == 0xDEADBEEF);
      // recompute restores a correct checksum, and it verifies
      const PeFile fixed = apply_action(out, ActionKind::SetChecksum, 1);
      const Bytes blob = serialize_pe(fixed);
      CHECK(fixed.opt.checksum() == compute_pe_checksum(blob));
    }
    if (is_applicable(pe, ActionKind::SetChecksum, 3)) {
      CHECK(apply_action(pe, ActionKind::SetChecksum, 3).opt.checksum() == 0x1);
    }
  }
}

TEST_CASE("append overlay grows the file by the pool size") {
  const auto files = sample_files(70, 3);
  const auto pool = param_pool_entries(ActionKind::AppendOverlay);
  const std::size_t sizes[] = {64, 256, 1024, 4096, 16384};
  REQUIRE(pool.size() == 5);
  for (const PeFile& pe : files) {
    const std::size_t before = serialize_pe(pe).size();
    for (std::uint32_t p = 0; p < 5; ++p) {
      const PeFile out = apply_action(pe, ActionKind::AppendOverlay, p);
      CHECK(serialize_pe(out).size() == before + sizes[p]);
      CHECK(out.overlay.size() == pe.overlay.size() + sizes[p]);
    }
  }
}

TEST_CASE("add import keeps the old imports and appends one") {
  const auto files = sample_files(71, 6);
  std::size_t applied = 0;
  for (const PeFile& pe : files) {
    if (!is_applicable(pe, ActionKind::AddImport, 3)) continue;
    ++applied;
    const std::uint32_t old_size = pe.opt.dir(kDirImport).size;
    const PeFile out = apply_action(pe, ActionKind::AddImport, 3);
    CHECK(out.sections.size() == pe.sections.size() + 1);
    CHECK(out.opt.dir(kDirImport).size == old_size + 20);  // one more descriptor
    const Bytes blob = serialize_pe(out);
    const std::string text(blob.begin(), blob.end());
    CHECK(text.find("CloseHandle") != std::string::npos);
    CHECK(text.find("kernel32.dll") != std::string::npos);
  }
  CHECK(applied >= 4);
}

TEST_CASE("new entry point lands in a fresh section that jumps home") {
  const auto files = sample_files(72, 6);
  std::size_t applied = 0;
  for (const PeFile& pe : files) {
    if (!is_applicable(pe, ActionKind::NewEntryPoint, 1)) continue;
    ++applied;
    const std::uint32_t old_entry = pe.opt.entry_point_rva();
    const PeFile out = apply_action(pe, ActionKind::NewEntryPoint, 1);
    CHECK(out.sections.size() == pe.sections.size() + 1);
    const std::uint32_t new_entry = out.opt.entry_point_rva();
    CHECK(new_entry != old_entry);
    const auto off = out.rva_to_file_offset(new_entry);
    REQUIRE(off.has_value());
    const Bytes blob = serialize_pe(out);
    CHECK(blob[*off] == 0xE9);  // rel32 jump back to the old entry
    const std::uint32_t rel = read_u32(blob.data() + *off + 1);
    CHECK(new_entry + 5 + rel == old_entry);
  }
  CHECK(applied >= 4);
}

TEST_CASE("sequences skip inapplicable genes instead of failing") {
  const auto files = sample_files(73, 3);
  for (const PeFile& pe : files) {
    // Unpack before any pack is never applicable; the rest proceed.
    ActionSequence seq{{{ActionKind::Unpack, 0},
                       {ActionKind::AppendOverlay, 0},
                       {ActionKind::Unpack, 0}}};
    const ApplyOutcome out = apply_sequence(pe, seq);
    CHECK_FALSE(out.applied[0]);
    CHECK(out.applied[1]);
    CHECK_FALSE(out.applied[2]);
    CHECK(out.modified_bytes == 64);
    CHECK_FALSE(out.hit_irreversible);
  }
}

TEST_CASE("sequence irreversibility flag tracks the risky genes") {
  const auto files = sample_files(74, 8);
  for (const PeFile& pe : files) {
    if (pe.certificate.empty()) continue;
    const ApplyOutcome out =
        apply_sequence(pe, ActionSequence{{{ActionKind::RemoveSignature, 0}}});
    CHECK(out.applied[0]);
    CHECK(out.hit_irreversible);

    const ApplyOutcome safe =
        apply_sequence(pe, ActionSequence{{{ActionKind::AppendOverlay, 1}}});
    CHECK_FALSE(safe.hit_irreversible);
  }
}

TEST_CASE("two-step search cannot restore a stripped certificate") {
  // Irreversibility, checked by brute force: after RemoveSignature, no
  // follow-up (kind, param) brings back the original bytes.
  const auto files = sample_files(75, 6);
  std::size_t tried = 0;
  for (const PeFile& pe : files) {
    if (pe.certificate.empty()) continue;
    ++tried;
    const Bytes original = serialize_pe(pe);
    const PeFile stripped = apply_action(pe, ActionKind::RemoveSignature, 0);
    for (const ActionDescriptor& d : action_descriptors()) {
      for (std::uint32_t p = 0; p < d.param_pool_size; ++p) {
        if (!is_applicable(stripped, d.kind, p)) continue;
        CHECK(serialize_pe(apply_action(stripped, d.kind, p)) != original);
      }
    }
  }
  CHECK(tried >= 2);
}

TEST_CASE("gene descriptions name the action and parameter") {
  CHECK(describe_gene({ActionKind::NoOp, 0}) == "NoOp");
  CHECK(describe_gene({ActionKind::AppendOverlay, 2}).find("AppendOverlay") == 0);
  const std::string seq = describe_sequence(
      ActionSequence{{{ActionKind::Pack, 0}, {ActionKind::NoOp, 0}}});
  CHECK(seq.find("Pack") != std::string::npos);
  CHECK(seq.find("NoOp") != std::string::npos);
}
