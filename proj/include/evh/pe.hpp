#ifndef EVH_PE_HPP
#define EVH_PE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evh/bytes.hpp"
#include "evh/errors.hpp"

namespace evh {

// Lossless in-memory model of a PE executable. Every byte of an accepted file
// is owned by exactly one region below, and serialize(parse(b)) == b.
//
// File layout, in offset order:
//   dos_header(64) | dos_stub | "PE\0\0" | coff(20) | optional header |
//   section table(40 * n) | header_pad | per section: payload + slack |
//   certificate | overlay
//
// Slack is the zero-to-(file_alignment-1) byte region between a section's raw
// data end and the next aligned file offset. The certificate blob, when the
// security directory is populated, sits at the aligned end of the last
// section; everything after it is overlay.

constexpr std::size_t kDosHeaderSize = 64;
constexpr std::size_t kCoffHeaderSize = 20;
constexpr std::size_t kSectionHeaderSize = 40;
constexpr std::uint16_t kPe32Magic = 0x10B;
constexpr std::uint16_t kPe32PlusMagic = 0x20B;

constexpr std::size_t kDirImport = 1;
constexpr std::size_t kDirSecurity = 4;
constexpr std::size_t kDirDebug = 6;

struct CoffHeader {
    std::uint16_t machine = 0;
    std::uint16_t section_count = 0;
    std::uint32_t timestamp = 0;
    std::uint32_t symbol_table_offset = 0;
    std::uint32_t symbol_count = 0;
    std::uint16_t optional_header_size = 0;
    std::uint16_t characteristics = 0;
};

struct DataDirectory {
    std::uint32_t rva = 0; // file offset for the security directory
    std::uint32_t size = 0;
};

// The optional header is carried as raw bytes; interpreted fields are
// accessors that read and write in place, so unmodeled fields (subsystem,
// linker versions, stack sizes...) survive round trips untouched.
struct OptionalHeader {
    Bytes raw;

    bool plus() const { return read_u16(raw.data()) == kPe32PlusMagic; }
    std::uint16_t magic() const { return read_u16(raw.data()); }

    std::uint32_t entry_point_rva() const { return read_u32(raw.data() + 16); }
    void set_entry_point_rva(std::uint32_t v) { write_u32(raw.data() + 16, v); }

    std::uint64_t image_base() const {
        return plus() ? read_u64(raw.data() + 24) : read_u32(raw.data() + 28);
    }
    std::uint32_t section_alignment() const { return read_u32(raw.data() + 32); }
    std::uint32_t file_alignment() const { return read_u32(raw.data() + 36); }

    std::uint32_t size_of_image() const { return read_u32(raw.data() + 56); }
    void set_size_of_image(std::uint32_t v) { write_u32(raw.data() + 56, v); }

    std::uint32_t checksum() const { return read_u32(raw.data() + 64); }
    void set_checksum(std::uint32_t v) { write_u32(raw.data() + 64, v); }

    std::size_t dir_count_offset() const { return plus() ? 108 : 92; }
    std::uint32_t data_directory_count() const {
        return read_u32(raw.data() + dir_count_offset());
    }
    DataDirectory dir(std::size_t index) const;
    void set_dir(std::size_t index, DataDirectory d);
};

struct SectionHeader {
    std::array<std::uint8_t, 8> name{};
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t raw_offset = 0;
    std::array<std::uint8_t, 12> reloc_fields{}; // relocation/linenumber block, opaque
    std::uint32_t characteristics = 0;

    std::string name_string() const;
    void set_name(const std::string& s);
};

struct PeFile {
    std::array<std::uint8_t, kDosHeaderSize> dos_header{};
    Bytes dos_stub;
    CoffHeader coff;
    OptionalHeader opt;
    std::vector<SectionHeader> sections;
    Bytes header_pad;
    std::vector<Bytes> section_data;  // one payload per section
    std::vector<Bytes> section_slack; // alignment padding after each payload
    Bytes certificate;
    Bytes overlay;

    std::uint32_t e_lfanew() const { return read_u32(dos_header.data() + 0x3C); }

    // File offset of each structure, derived from the model.
    std::size_t coff_offset() const { return e_lfanew() + 4; }
    std::size_t optional_header_offset() const { return coff_offset() + kCoffHeaderSize; }
    std::size_t section_table_offset() const {
        return optional_header_offset() + opt.raw.size();
    }
    std::size_t checksum_field_offset() const { return optional_header_offset() + 64; }

    std::size_t serialized_size() const;

    // Lowest file offset usable by section data, given the current table size.
    std::size_t header_end_offset() const {
        return section_table_offset() + sections.size() * kSectionHeaderSize;
    }

    // Room (bytes) left in header_pad for extra section table entries.
    std::size_t table_slack() const { return header_pad.size(); }

    // First virtual address beyond all current sections, section-aligned.
    std::uint32_t next_virtual_address() const;

    // File offset where a new section's raw data would start (aligned end of
    // the last section's extent).
    std::uint32_t next_raw_offset() const;

    std::optional<std::size_t> rva_to_section(std::uint32_t rva) const;
    std::optional<std::size_t> rva_to_file_offset(std::uint32_t rva) const;

    void validate() const; // throws MalformedPe / LayoutConflict
};

PeFile parse_pe(std::span<const std::uint8_t> data);
Bytes serialize_pe(const PeFile& file);

// Standard PE checksum: carry-folded 16-bit word sum with the stored checksum
// field treated as zero, plus the file length.
std::uint32_t pe_checksum_core(std::span<const std::uint8_t> data, std::size_t checksum_offset);
std::uint32_t compute_pe_checksum(std::span<const std::uint8_t> data);

} // namespace evh

#endif
