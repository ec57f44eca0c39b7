#include "evh/pe.hpp"

#include <algorithm>
#include <cstring>

namespace evh {

namespace {

bool is_pow2(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

void need(bool cond, const char* reason) {
    if (!cond) throw MalformedPe(reason);
}

} // namespace

DataDirectory OptionalHeader::dir(std::size_t index) const {
    const std::size_t base = dir_count_offset() + 4 + index * 8;
    if (index >= data_directory_count() || base + 8 > raw.size()) return {};
    return {read_u32(raw.data() + base), read_u32(raw.data() + base + 4)};
}

void OptionalHeader::set_dir(std::size_t index, DataDirectory d) {
    const std::size_t base = dir_count_offset() + 4 + index * 8;
    if (index >= data_directory_count() || base + 8 > raw.size())
        throw MalformedPe("data directory index out of range");
    write_u32(raw.data() + base, d.rva);
    write_u32(raw.data() + base + 4, d.size);
}

std::string SectionHeader::name_string() const {
    std::size_t len = 0;
    while (len < name.size() && name[len] != 0) ++len;
    return std::string(reinterpret_cast<const char*>(name.data()), len);
}

void SectionHeader::set_name(const std::string& s) {
    name.fill(0);
    std::memcpy(name.data(), s.data(), std::min<std::size_t>(s.size(), name.size()));
}

std::size_t PeFile::serialized_size() const {
    std::size_t total = kDosHeaderSize + dos_stub.size() + 4 + kCoffHeaderSize +
                        opt.raw.size() + sections.size() * kSectionHeaderSize +
                        header_pad.size();
    for (std::size_t i = 0; i < section_data.size(); ++i)
        total += section_data[i].size() + section_slack[i].size();
    return total + certificate.size() + overlay.size();
}

std::uint32_t PeFile::next_virtual_address() const {
    const std::uint32_t salign = opt.section_alignment();
    std::uint32_t next = salign;
    for (const auto& s : sections) {
        const std::uint32_t span = std::max(s.virtual_size, s.raw_size);
        next = std::max(next, align_up(s.virtual_address + std::max<std::uint32_t>(span, 1), salign));
    }
    return next;
}

std::uint32_t PeFile::next_raw_offset() const {
    const std::uint32_t falign = opt.file_alignment();
    std::uint32_t end = static_cast<std::uint32_t>(header_end_offset() + header_pad.size());
    for (const auto& s : sections) {
        if (s.raw_size > 0) end = std::max(end, s.raw_offset + s.raw_size);
    }
    return align_up(end, falign);
}

std::optional<std::size_t> PeFile::rva_to_section(std::uint32_t rva) const {
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto& s = sections[i];
        const std::uint32_t span = std::max(s.virtual_size, s.raw_size);
        if (rva >= s.virtual_address && rva < s.virtual_address + span) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> PeFile::rva_to_file_offset(std::uint32_t rva) const {
    auto idx = rva_to_section(rva);
    if (!idx) return std::nullopt;
    const auto& s = sections[*idx];
    const std::uint32_t delta = rva - s.virtual_address;
    if (delta >= s.raw_size) return std::nullopt;
    return s.raw_offset + delta;
}

void PeFile::validate() const {
    need(dos_header[0] == 'M' && dos_header[1] == 'Z', "missing MZ magic");
    need(e_lfanew() == kDosHeaderSize + dos_stub.size(), "e_lfanew disagrees with stub length");
    need(coff.section_count == sections.size(), "section count mismatch");
    need(sections.size() == section_data.size() && sections.size() == section_slack.size(),
         "section data/slack arity mismatch");
    need(opt.raw.size() >= 96 && coff.optional_header_size == opt.raw.size(),
         "optional header size mismatch");
    const std::uint16_t magic = opt.magic();
    need(magic == kPe32Magic || magic == kPe32PlusMagic, "unknown optional header magic");
    const std::uint32_t ndirs = opt.data_directory_count();
    need(ndirs <= 16, "data directory count out of range");
    need(opt.raw.size() == opt.dir_count_offset() + 4 + 8 * ndirs,
         "optional header length disagrees with directory count");

    const std::uint32_t falign = opt.file_alignment();
    need(is_pow2(falign) && falign >= 16 && falign <= 65536, "bad file alignment");
    need(opt.section_alignment() >= falign, "section alignment below file alignment");

    const std::size_t header_end = header_end_offset();
    std::size_t cursor = header_end + header_pad.size();
    bool first_extent = true;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto& s = sections[i];
        need(section_data[i].size() == s.raw_size, "payload length disagrees with header");
        if (s.raw_size == 0) {
            need(section_slack[i].empty(), "slack on empty section");
            continue;
        }
        need(s.raw_offset % falign == 0, "misaligned section raw offset");
        need(s.raw_offset == cursor || first_extent, "section extent out of order");
        if (first_extent) {
            need(s.raw_offset >= header_end, "section overlaps headers");
            need(s.raw_offset == header_end + header_pad.size(),
                 "header pad disagrees with first section offset");
            first_extent = false;
        }
        const std::size_t end = s.raw_offset + s.raw_size;
        const std::size_t gap_cap = align_up(end, static_cast<std::size_t>(falign)) - end;
        need(section_slack[i].size() <= gap_cap, "slack exceeds alignment gap");
        cursor = end + section_slack[i].size();
        // every section but the last must be padded out to the next boundary
        if (i + 1 < sections.size() && sections[i + 1].raw_size > 0)
            need(section_slack[i].size() == gap_cap, "interior slack not filling gap");
    }

    const DataDirectory sec_dir = opt.data_directory_count() > kDirSecurity
                                      ? opt.dir(kDirSecurity)
                                      : DataDirectory{};
    if (certificate.empty()) {
        need(sec_dir.rva == 0 && sec_dir.size == 0, "security directory without certificate");
    } else {
        need(sec_dir.size == certificate.size(), "security directory size mismatch");
        need(sec_dir.rva == cursor, "certificate not at aligned end of sections");
    }
}

PeFile parse_pe(std::span<const std::uint8_t> data) {
    need(!data.empty(), "empty input");
    need(data.size() >= kDosHeaderSize, "shorter than DOS header");
    need(data[0] == 'M' && data[1] == 'Z', "missing MZ magic");

    PeFile pe;
    std::memcpy(pe.dos_header.data(), data.data(), kDosHeaderSize);
    const std::uint32_t e_lfanew = pe.e_lfanew();
    need(e_lfanew >= kDosHeaderSize, "e_lfanew inside DOS header");
    need(static_cast<std::size_t>(e_lfanew) + 4 + kCoffHeaderSize <= data.size(),
         "e_lfanew past end of file");
    pe.dos_stub.assign(data.begin() + kDosHeaderSize, data.begin() + e_lfanew);

    const std::uint8_t* sig = data.data() + e_lfanew;
    need(sig[0] == 'P' && sig[1] == 'E' && sig[2] == 0 && sig[3] == 0, "missing PE signature");

    const std::uint8_t* coff = sig + 4;
    pe.coff.machine = read_u16(coff);
    pe.coff.section_count = read_u16(coff + 2);
    pe.coff.timestamp = read_u32(coff + 4);
    pe.coff.symbol_table_offset = read_u32(coff + 8);
    pe.coff.symbol_count = read_u32(coff + 12);
    pe.coff.optional_header_size = read_u16(coff + 16);
    pe.coff.characteristics = read_u16(coff + 18);

    const std::size_t opt_off = e_lfanew + 4 + kCoffHeaderSize;
    need(pe.coff.optional_header_size >= 96, "optional header too small");
    need(opt_off + pe.coff.optional_header_size <= data.size(), "optional header past end");
    pe.opt.raw.assign(data.begin() + opt_off,
                      data.begin() + opt_off + pe.coff.optional_header_size);
    const std::uint16_t magic = pe.opt.magic();
    need(magic == kPe32Magic || magic == kPe32PlusMagic, "unknown optional header magic");
    need(pe.opt.raw.size() >= pe.opt.dir_count_offset() + 4, "optional header truncated");

    const std::size_t table_off = opt_off + pe.coff.optional_header_size;
    const std::size_t table_end = table_off + pe.coff.section_count * kSectionHeaderSize;
    need(table_end <= data.size(), "section table past end of file");

    for (std::size_t i = 0; i < pe.coff.section_count; ++i) {
        const std::uint8_t* row = data.data() + table_off + i * kSectionHeaderSize;
        SectionHeader s;
        std::memcpy(s.name.data(), row, 8);
        s.virtual_size = read_u32(row + 8);
        s.virtual_address = read_u32(row + 12);
        s.raw_size = read_u32(row + 16);
        s.raw_offset = read_u32(row + 20);
        std::memcpy(s.reloc_fields.data(), row + 24, 12);
        s.characteristics = read_u32(row + 36);
        pe.sections.push_back(s);
    }

    const std::uint32_t falign = pe.opt.file_alignment();
    need(is_pow2(falign) && falign >= 16 && falign <= 65536, "bad file alignment");

    // Section extents: strictly increasing, aligned, adjacent up to alignment.
    std::size_t cursor = table_end;
    bool first_extent = true;
    std::size_t last_end = table_end;
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        const auto& s = pe.sections[i];
        if (s.raw_size == 0) {
            pe.section_data.emplace_back();
            pe.section_slack.emplace_back();
            continue;
        }
        need(s.raw_offset % falign == 0, "misaligned section raw offset");
        need(static_cast<std::size_t>(s.raw_offset) + s.raw_size <= data.size(),
             "section data past end of file");
        if (first_extent) {
            need(s.raw_offset >= table_end, "section overlaps headers");
            pe.header_pad.assign(data.begin() + table_end, data.begin() + s.raw_offset);
            first_extent = false;
        } else {
            need(s.raw_offset >= cursor, "overlapping sections");
            need(s.raw_offset == align_up(cursor, static_cast<std::size_t>(falign)),
                 "unaccounted gap between sections");
        }
        pe.section_data.emplace_back(data.begin() + s.raw_offset,
                                     data.begin() + s.raw_offset + s.raw_size);
        pe.section_slack.emplace_back();
        cursor = s.raw_offset + s.raw_size;
        last_end = cursor;
    }

    // Slack regions between payload ends and the next aligned offset.
    std::size_t prev_nonzero = SIZE_MAX;
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        if (pe.sections[i].raw_size == 0) continue;
        if (prev_nonzero != SIZE_MAX) {
            const auto& p = pe.sections[prev_nonzero];
            const std::size_t end = p.raw_offset + p.raw_size;
            pe.section_slack[prev_nonzero].assign(data.begin() + end,
                                                  data.begin() + pe.sections[i].raw_offset);
        }
        prev_nonzero = i;
    }

    std::size_t tail_start = table_end + pe.header_pad.size();
    if (prev_nonzero != SIZE_MAX) {
        const std::size_t aligned_end =
            align_up(last_end, static_cast<std::size_t>(falign));
        const std::size_t slack_end = std::min(aligned_end, data.size());
        pe.section_slack[prev_nonzero].assign(data.begin() + last_end,
                                              data.begin() + slack_end);
        tail_start = slack_end;
    }

    // Certificate blob, when the security directory is populated. Its "rva"
    // field is a plain file offset.
    const DataDirectory sec_dir = pe.opt.data_directory_count() > kDirSecurity
                                      ? pe.opt.dir(kDirSecurity)
                                      : DataDirectory{};
    if (sec_dir.rva != 0 || sec_dir.size != 0) {
        need(sec_dir.rva != 0 && sec_dir.size != 0, "half-empty security directory");
        need(sec_dir.rva == tail_start, "certificate not at aligned end of sections");
        need(static_cast<std::size_t>(sec_dir.rva) + sec_dir.size <= data.size(),
             "certificate past end of file");
        pe.certificate.assign(data.begin() + sec_dir.rva,
                              data.begin() + sec_dir.rva + sec_dir.size);
        tail_start = sec_dir.rva + sec_dir.size;
    }

    pe.overlay.assign(data.begin() + tail_start, data.end());

    pe.validate();
    return pe;
}

Bytes serialize_pe(const PeFile& file) {
    file.validate();
    Bytes out;
    out.reserve(file.serialized_size());

    out.insert(out.end(), file.dos_header.begin(), file.dos_header.end());
    out.insert(out.end(), file.dos_stub.begin(), file.dos_stub.end());

    const std::uint8_t sig[4] = {'P', 'E', 0, 0};
    out.insert(out.end(), sig, sig + 4);

    std::uint8_t coff[kCoffHeaderSize];
    write_u16(coff, file.coff.machine);
    write_u16(coff + 2, file.coff.section_count);
    write_u32(coff + 4, file.coff.timestamp);
    write_u32(coff + 8, file.coff.symbol_table_offset);
    write_u32(coff + 12, file.coff.symbol_count);
    write_u16(coff + 16, file.coff.optional_header_size);
    write_u16(coff + 18, file.coff.characteristics);
    out.insert(out.end(), coff, coff + kCoffHeaderSize);

    out.insert(out.end(), file.opt.raw.begin(), file.opt.raw.end());

    for (const auto& s : file.sections) {
        std::uint8_t row[kSectionHeaderSize];
        std::memcpy(row, s.name.data(), 8);
        write_u32(row + 8, s.virtual_size);
        write_u32(row + 12, s.virtual_address);
        write_u32(row + 16, s.raw_size);
        write_u32(row + 20, s.raw_offset);
        std::memcpy(row + 24, s.reloc_fields.data(), 12);
        write_u32(row + 36, s.characteristics);
        out.insert(out.end(), row, row + kSectionHeaderSize);
    }

    out.insert(out.end(), file.header_pad.begin(), file.header_pad.end());

    for (std::size_t i = 0; i < file.sections.size(); ++i) {
        if (file.sections[i].raw_size == 0) continue;
        if (out.size() != file.sections[i].raw_offset)
            throw LayoutConflict("section " + std::to_string(i) +
                                 " raw offset disagrees with emitted position");
        out.insert(out.end(), file.section_data[i].begin(), file.section_data[i].end());
        out.insert(out.end(), file.section_slack[i].begin(), file.section_slack[i].end());
    }

    if (!file.certificate.empty()) {
        const DataDirectory sec_dir = file.opt.dir(kDirSecurity);
        if (out.size() != sec_dir.rva)
            throw LayoutConflict("certificate offset disagrees with emitted position");
        out.insert(out.end(), file.certificate.begin(), file.certificate.end());
    }

    out.insert(out.end(), file.overlay.begin(), file.overlay.end());
    return out;
}

std::uint32_t pe_checksum_core(std::span<const std::uint8_t> data, std::size_t checksum_offset) {
    auto byte_at = [&](std::size_t i) -> std::uint32_t {
        if (i >= checksum_offset && i < checksum_offset + 4) return 0;
        return data[i];
    };
    std::uint32_t sum = 0;
    const std::size_t n = data.size();
    std::size_t i = 0;
    for (; i + 1 < n; i += 2) {
        sum += byte_at(i) | (byte_at(i + 1) << 8);
        sum = (sum >> 16) + (sum & 0xFFFF);
    }
    if (i < n) {
        sum += byte_at(i);
        sum = (sum >> 16) + (sum & 0xFFFF);
    }
    sum = (sum >> 16) + (sum & 0xFFFF);
    return sum + static_cast<std::uint32_t>(data.size());
}

std::uint32_t compute_pe_checksum(std::span<const std::uint8_t> data) {
    need(data.size() >= kDosHeaderSize, "shorter than DOS header");
    need(data[0] == 'M' && data[1] == 'Z', "missing MZ magic");
    const std::uint32_t e_lfanew = read_u32(data.data() + 0x3C);
    need(e_lfanew >= kDosHeaderSize &&
             static_cast<std::size_t>(e_lfanew) + 4 + kCoffHeaderSize + 68 <= data.size(),
         "no optional header checksum field");
    const std::uint8_t* sig = data.data() + e_lfanew;
    need(sig[0] == 'P' && sig[1] == 'E' && sig[2] == 0 && sig[3] == 0, "missing PE signature");
    const std::size_t opt_off = e_lfanew + 4 + kCoffHeaderSize;
    const std::uint16_t magic = read_u16(data.data() + opt_off);
    need(magic == kPe32Magic || magic == kPe32PlusMagic, "unknown optional header magic");
    return pe_checksum_core(data, opt_off + 64);
}

} // namespace evh
