#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evh/bytes.hpp"
#include "evh/corpus.hpp"
#include "evh/errors.hpp"
#include "evh/pe.hpp"
#include "evh/rng.hpp"

using namespace evh;

namespace {

void push_u16(Bytes& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}

void push_u32(Bytes& b, std::uint32_t v) {
  push_u16(b, v & 0xFFFF);
  push_u16(b, v >> 16);
}

// Reference checksum: accumulate all 16-bit words into a wide integer first,
// fold once at the end. The production code folds after every word; both
// reduce modulo 0xFFFF, so they must agree on every input.
std::uint32_t checksum_oracle(const Bytes& data, std::size_t checksum_offset) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) {
    std::uint16_t w = 0;
    if (i + 0 < checksum_offset || i + 0 >= checksum_offset + 4) w |= data[i];
    if (i + 1 < checksum_offset || i + 1 >= checksum_offset + 4) w |= std::uint16_t(data[i + 1]) << 8;
    total += w;
  }
  if (data.size() % 2) {
    std::size_t i = data.size() - 1;
    if (i < checksum_offset || i >= checksum_offset + 4) total += data[i];
  }
  while (total >> 16) total = (total & 0xFFFF) + (total >> 16);
  return static_cast<std::uint32_t>(total) + static_cast<std::uint32_t>(data.size());
}

// A complete 1024-byte PE32 image with one .text section, built field by
// field so every offset in the parser is pinned by an explicit number.
Bytes minimal_pe() {
  Bytes b;
  b.push_back('M');
  b.push_back('Z');
  b.resize(0x3C, 0);
  push_u32(b, 64);  // e_lfanew, table starts right after this header

  b.push_back('P');
  b.push_back('E');
  b.push_back(0);
  b.push_back(0);

  push_u16(b, 0x014C);  // machine, x86
  push_u16(b, 1);       // one section
  push_u32(b, 0);       // timestamp
  push_u32(b, 0);       // symbol table
  push_u32(b, 0);       // symbol count
  push_u16(b, 224);     // optional header size
  push_u16(b, 0x0102);  // executable, 32-bit

  push_u16(b, 0x10B);  // PE32
  b.push_back(14);     // linker major
  b.push_back(0);      // linker minor
  push_u32(b, 512);    // size of code
  push_u32(b, 0);      // size of initialized data
  push_u32(b, 0);      // size of uninitialized data
  push_u32(b, 0x1000); // entry point
  push_u32(b, 0x1000); // base of code
  push_u32(b, 0x2000); // base of data
  push_u32(b, 0x400000); // image base
  push_u32(b, 4096);   // section alignment
  push_u32(b, 512);    // file alignment
  push_u16(b, 6); push_u16(b, 0);  // os version
  push_u16(b, 0); push_u16(b, 0);  // image version
  push_u16(b, 6); push_u16(b, 0);  // subsystem version
  push_u32(b, 0);      // win32 version
  push_u32(b, 0x2000); // size of image
  push_u32(b, 512);    // size of headers
  push_u32(b, 0);      // checksum
  push_u16(b, 3);      // console subsystem
  push_u16(b, 0x8140); // dll characteristics
  push_u32(b, 0x100000); push_u32(b, 0x1000);  // stack reserve/commit
  push_u32(b, 0x100000); push_u32(b, 0x1000);  // heap reserve/commit
  push_u32(b, 0);      // loader flags
  push_u32(b, 16);     // data directory count
  for (int i = 0; i < 16; ++i) {
    push_u32(b, 0);
    push_u32(b, 0);
  }

  const char* name = ".text";
  for (int i = 0; i < 8; ++i) b.push_back(i < 5 ? name[i] : 0);
  push_u32(b, 512);        // virtual size
  push_u32(b, 0x1000);     // virtual address
  push_u32(b, 512);        // raw size
  push_u32(b, 512);        // raw offset
  for (int i = 0; i < 12; ++i) b.push_back(0);
  push_u32(b, 0x60000020); // code, execute, read

  CHECK(b.size() == 352);
  b.resize(512, 0);  // header pad up to the first aligned raw offset
  for (int i = 0; i < 512; ++i) b.push_back(static_cast<std::uint8_t>(i & 0xFF));
  return b;
}

Bytes with_u32_at(Bytes b, std::size_t off, std::uint32_t v) {
  write_u32(b.data() + off, v);
  return b;
}

}  // namespace

TEST_CASE("checksum oracle agrees on frozen values") {
  // Values worked out by hand from the fold-mod-0xFFFF definition.
  CHECK(checksum_oracle({}, 1000) == 0);
  CHECK(checksum_oracle({0x12}, 1000) == 0x13);
  CHECK(checksum_oracle({0x01, 0x00}, 1000) == 3);
  CHECK(checksum_oracle({0xFF, 0xFF}, 1000) == 0x10001);
  CHECK(checksum_oracle({0xFF, 0xFF, 0x01, 0x00}, 1000) == 5);
  CHECK(checksum_oracle({0x34, 0x12, 0x78, 0x56}, 0) == 4);  // all bytes masked
}

TEST_CASE("production checksum matches the deferred-fold oracle") {
  CHECK(pe_checksum_core(Bytes{}, 1000) == 0);
  CHECK(pe_checksum_core(Bytes{0x12}, 1000) == 0x13);
  CHECK(pe_checksum_core(Bytes{0x01, 0x00}, 1000) == 3);
  CHECK(pe_checksum_core(Bytes{0xFF, 0xFF}, 1000) == 0x10001);
  CHECK(pe_checksum_core(Bytes{0xFF, 0xFF, 0x01, 0x00}, 1000) == 5);

  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Bytes data(rng.below(700) + 1);
    for (auto& byte : data) byte = static_cast<std::uint8_t>(rng.below(256));
    const std::size_t off = rng.below(data.size() + 8);
    CHECK(pe_checksum_core(data, off) == checksum_oracle(data, off));
  }
}

TEST_CASE("minimal PE parses with every field as written") {
  const Bytes blob = minimal_pe();
  const PeFile pe = parse_pe(blob);

  CHECK(pe.e_lfanew() == 64);
  CHECK(pe.dos_stub.empty());
  CHECK(pe.coff.machine == 0x014C);
  CHECK(pe.coff.section_count == 1);
  CHECK(pe.coff.optional_header_size == 224);
  CHECK(pe.opt.magic() == kPe32Magic);
  CHECK_FALSE(pe.opt.plus());
  CHECK(pe.opt.entry_point_rva() == 0x1000);
  CHECK(pe.opt.image_base() == 0x400000);
  CHECK(pe.opt.section_alignment() == 4096);
  CHECK(pe.opt.file_alignment() == 512);
  CHECK(pe.opt.size_of_image() == 0x2000);
  CHECK(pe.opt.data_directory_count() == 16);
  CHECK(pe.sections.size() == 1);
  CHECK(pe.sections[0].name_string() == ".text");
  CHECK(pe.sections[0].virtual_address == 0x1000);
  CHECK(pe.sections[0].raw_offset == 512);
  CHECK(pe.header_pad.size() == 160);
  CHECK(pe.section_data[0].size() == 512);
  CHECK(pe.section_data[0][1] == 1);
  CHECK(pe.section_slack[0].empty());
  CHECK(pe.certificate.empty());
  CHECK(pe.overlay.empty());
  CHECK(pe.serialized_size() == blob.size());
  CHECK(pe.next_virtual_address() == 0x2000);
  CHECK(pe.next_raw_offset() == 1024);

  CHECK(serialize_pe(pe) == blob);
}

TEST_CASE("rva mapping on the minimal PE") {
  const PeFile pe = parse_pe(minimal_pe());
  CHECK(pe.rva_to_section(0x1000) == 0);
  CHECK(pe.rva_to_section(0x11FF) == 0);
  CHECK(pe.rva_to_file_offset(0x1000) == 512);
  CHECK(pe.rva_to_file_offset(0x1010) == 528);
  CHECK_FALSE(pe.rva_to_section(0x0FFF).has_value());
  CHECK_FALSE(pe.rva_to_section(0x2000).has_value());
  CHECK_FALSE(pe.rva_to_file_offset(0x3000).has_value());
}

TEST_CASE("malformed inputs are rejected") {
  const Bytes good = minimal_pe();
  const std::size_t opt_off = 88;

  CHECK_THROWS_AS(parse_pe(Bytes{}), MalformedPe);
  CHECK_THROWS_AS(parse_pe(Bytes{'M'}), MalformedPe);

  Bytes bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_pe(bad_magic), MalformedPe);

  Bytes truncated(good.begin(), good.begin() + 100);
  CHECK_THROWS_AS(parse_pe(truncated), MalformedPe);

  Bytes short_payload(good.begin(), good.begin() + 700);
  CHECK_THROWS_AS(parse_pe(short_payload), MalformedPe);

  CHECK_THROWS_AS(parse_pe(with_u32_at(good, 0x3C, 4096)), MalformedPe);

  Bytes bad_sig = good;
  bad_sig[65] = 'F';
  CHECK_THROWS_AS(parse_pe(bad_sig), MalformedPe);

  CHECK_THROWS_AS(parse_pe(with_u32_at(good, opt_off + 36, 0)), MalformedPe);
  CHECK_THROWS_AS(parse_pe(with_u32_at(good, opt_off + 36, 48)), MalformedPe);
  CHECK_THROWS_AS(parse_pe(with_u32_at(good, opt_off + 92, 17)), MalformedPe);

  // raw offset off the alignment grid
  CHECK_THROWS_AS(parse_pe(with_u32_at(good, 352 - 40 + 20, 513)), MalformedPe);
  // raw size runs past the end of the file
  CHECK_THROWS_AS(parse_pe(with_u32_at(good, 352 - 40 + 16, 4096)), MalformedPe);

  // security directory pointing at data the file does not have
  Bytes bad_cert = with_u32_at(good, opt_off + 96 + 8 * kDirSecurity, 1024);
  bad_cert = with_u32_at(bad_cert, opt_off + 96 + 8 * kDirSecurity + 4, 100);
  CHECK_THROWS_AS(parse_pe(bad_cert), MalformedPe);
}

TEST_CASE("generated samples round-trip and checksum like the oracle") {
  CorpusConfig cfg;
  cfg.seed = 904;
  for (std::uint64_t id = 0; id < 24; ++id) {
    for (int label : {0, 1}) {
      const PeFile pe = generate_sample(cfg, id, label);
      const Bytes blob = serialize_pe(pe);
      const PeFile again = parse_pe(blob);
      CHECK(serialize_pe(again) == blob);
      CHECK(again.sections.size() == pe.sections.size());
      CHECK(again.certificate == pe.certificate);
      CHECK(again.overlay == pe.overlay);
      CHECK(compute_pe_checksum(blob) ==
            checksum_oracle(blob, again.checksum_field_offset()));
    }
  }
}

TEST_CASE("slack fills the alignment gap exactly on generated samples") {
  CorpusConfig cfg;
  cfg.seed = 77;
  for (std::uint64_t id = 0; id < 10; ++id) {
    const PeFile pe = generate_sample(cfg, id, 0);
    const std::uint32_t falign = pe.opt.file_alignment();
    for (std::size_t s = 0; s < pe.sections.size(); ++s) {
      const std::size_t gap =
          (falign - pe.section_data[s].size() % falign) % falign;
      CHECK(pe.section_slack[s].size() == gap);
    }
  }
}
