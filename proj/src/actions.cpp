#include "evh/actions.hpp"

#include <algorithm>
#include <cstring>

namespace evh {

namespace {

constexpr std::uint8_t kFillByte = 0xCC;
constexpr std::uint32_t kCodeSection = 0x60000020;
constexpr std::uint32_t kDataSection = 0xC0000040;
constexpr char kPackMagic[8] = {'R', 'L', 'E', 'P', 'A', 'C', 'K', '1'};

// Familiar API names blend in with what typical import tables already hold.
const char* kImportNames[8] = {"GetTickCount",   "CreateFileA",  "ReadFile",
                               "CloseHandle",    "GetLastError", "Sleep",
                               "GetModuleHandleA", "VirtualAlloc"};
const char* kImportDll = "kernel32.dll";

// Rename pool doubles as the generator's naming pool so the original name is
// always reachable again.
const char* kSectionNames[8] = {".text", ".data", ".rdata", ".rsrc",
                                ".idata", ".code", ".blob", ".pad0"};

const std::uint32_t kSlackSizes[4] = {64, 256, 1024, 4096};
const char* kEntryStubNames[4] = {".text", ".code", ".pad0", ".blob"};
const std::uint32_t kOverlaySizes[5] = {64, 256, 1024, 4096, 16384};
const char* kChecksumModes[4] = {"zero", "recomputed", "deadbeef", "one"};

const std::array<ActionDescriptor, kActionKindCount> kDescriptors = {{
    {ActionKind::AddImport, "AddImport", true, 0.1175, 8},
    {ActionKind::RenameSection, "RenameSection", true, 0.1175, 64},
    {ActionKind::AppendSectionSlack, "AppendSectionSlack", true, 0.1175, 4},
    {ActionKind::NewEntryPoint, "NewEntryPoint", true, 0.1175, 4},
    {ActionKind::RemoveSignature, "RemoveSignature", false, 0.02, 1},
    {ActionKind::StripDebug, "StripDebug", false, 0.02, 1},
    {ActionKind::Pack, "Pack", true, 0.1175, 1},
    {ActionKind::Unpack, "Unpack", true, 0.1175, 1},
    {ActionKind::SetChecksum, "SetChecksum", true, 0.02, 4},
    {ActionKind::AppendOverlay, "AppendOverlay", true, 0.1175, 5},
    {ActionKind::NoOp, "NoOp", true, 0.1175, 1},
}};

std::uint32_t alignment_gap(std::size_t size, std::uint32_t falign) {
    return static_cast<std::uint32_t>((falign - size % falign) % falign);
}

// Recompute canonical raw offsets: first section extent stays put, each later
// one starts right after the previous slack. Requires gap-sized slacks.
void relayout_sections(PeFile& pe) {
    std::size_t cursor = pe.header_end_offset() + pe.header_pad.size();
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        if (pe.sections[i].raw_size == 0) continue;
        pe.sections[i].raw_offset = static_cast<std::uint32_t>(cursor);
        cursor += pe.sections[i].raw_size + pe.section_slack[i].size();
    }
    if (!pe.certificate.empty())
        pe.opt.set_dir(kDirSecurity, {static_cast<std::uint32_t>(cursor),
                                      static_cast<std::uint32_t>(pe.certificate.size())});
}

std::size_t append_section(PeFile& pe, const std::string& name, Bytes payload,
                           std::uint32_t characteristics) {
    if (pe.header_pad.size() < kSectionHeaderSize)
        throw LayoutConflict("no header slack left to grow the section table");
    const std::uint32_t falign = pe.opt.file_alignment();

    // Top up the previous last slack so the new extent lands on the boundary.
    for (std::size_t i = pe.sections.size(); i-- > 0;) {
        if (pe.sections[i].raw_size == 0) continue;
        pe.section_slack[i].resize(alignment_gap(pe.sections[i].raw_size, falign), 0);
        break;
    }

    pe.header_pad.erase(pe.header_pad.begin(), pe.header_pad.begin() + kSectionHeaderSize);

    SectionHeader s{};
    s.set_name(name);
    s.virtual_address = pe.next_virtual_address();
    s.virtual_size = static_cast<std::uint32_t>(payload.size());
    s.raw_size = static_cast<std::uint32_t>(payload.size());
    s.raw_offset = pe.next_raw_offset();
    s.characteristics = characteristics;

    Bytes slack(alignment_gap(payload.size(), falign), 0);
    pe.sections.push_back(s);
    pe.section_data.push_back(std::move(payload));
    pe.section_slack.push_back(std::move(slack));
    pe.coff.section_count = static_cast<std::uint16_t>(pe.sections.size());

    pe.opt.set_size_of_image(align_up(s.virtual_address + std::max<std::uint32_t>(s.virtual_size, 1),
                                      pe.opt.section_alignment()));
    relayout_sections(pe);
    return pe.sections.size() - 1;
}

Bytes rle_encode(const Bytes& in) {
    Bytes out;
    std::size_t i = 0;
    while (i < in.size()) {
        std::size_t run = 1;
        while (run < 255 && i + run < in.size() && in[i + run] == in[i]) ++run;
        out.push_back(static_cast<std::uint8_t>(run));
        out.push_back(in[i]);
        i += run;
    }
    return out;
}

std::optional<Bytes> rle_decode(const std::uint8_t* body, std::size_t len) {
    if (len % 2 != 0) return std::nullopt;
    Bytes out;
    for (std::size_t i = 0; i < len; i += 2) {
        if (body[i] == 0) return std::nullopt;
        out.insert(out.end(), body[i], body[i + 1]);
    }
    return out;
}

bool has_pack_marker(const Bytes& payload) {
    return payload.size() >= 16 && std::memcmp(payload.data(), kPackMagic, 8) == 0;
}

std::optional<std::vector<std::array<std::uint8_t, 20>>>
read_import_descriptors(const PeFile& pe) {
    std::vector<std::array<std::uint8_t, 20>> out;
    const DataDirectory d = pe.opt.dir(kDirImport);
    if (d.rva == 0) return out;
    auto sec = pe.rva_to_section(d.rva);
    if (!sec) return std::nullopt;
    const Bytes& body = pe.section_data[*sec];
    std::size_t off = d.rva - pe.sections[*sec].virtual_address;
    for (int n = 0; n < 64; ++n) {
        if (off + 20 > body.size()) return std::nullopt;
        std::array<std::uint8_t, 20> e;
        std::memcpy(e.data(), body.data() + off, 20);
        if (std::all_of(e.begin(), e.end(), [](std::uint8_t b) { return b == 0; }))
            return out;
        out.push_back(e);
        off += 20;
    }
    return std::nullopt;
}

std::optional<PeFile> do_add_import(const PeFile& pe, std::uint32_t param) {
    if (pe.opt.data_directory_count() <= kDirImport) return std::nullopt;
    auto old = read_import_descriptors(pe);
    if (!old) return std::nullopt;
    if (pe.header_pad.size() < kSectionHeaderSize)
        throw LayoutConflict("no header slack left to grow the section table");

    PeFile out = pe;
    const std::uint32_t base = out.next_virtual_address();
    const std::uint32_t thunk = out.opt.plus() ? 8 : 4;
    const std::string func = kImportNames[param];

    const std::size_t ndesc = old->size();
    const std::size_t desc_bytes = (ndesc + 2) * 20;
    const std::size_t int_off = desc_bytes;
    const std::size_t iat_off = int_off + 2 * thunk;
    const std::size_t hint_off = iat_off + 2 * thunk;
    const std::size_t dll_off = hint_off + 2 + func.size() + 1;
    Bytes body(dll_off + std::strlen(kImportDll) + 1, 0);

    for (std::size_t i = 0; i < ndesc; ++i)
        std::memcpy(body.data() + i * 20, (*old)[i].data(), 20);
    std::uint8_t* nd = body.data() + ndesc * 20;
    write_u32(nd, base + static_cast<std::uint32_t>(int_off));
    write_u32(nd + 12, base + static_cast<std::uint32_t>(dll_off));
    write_u32(nd + 16, base + static_cast<std::uint32_t>(iat_off));

    const std::uint64_t hint_rva = base + hint_off;
    if (thunk == 8) {
        write_u64(body.data() + int_off, hint_rva);
        write_u64(body.data() + iat_off, hint_rva);
    } else {
        write_u32(body.data() + int_off, static_cast<std::uint32_t>(hint_rva));
        write_u32(body.data() + iat_off, static_cast<std::uint32_t>(hint_rva));
    }
    std::memcpy(body.data() + hint_off + 2, func.data(), func.size());
    std::memcpy(body.data() + dll_off, kImportDll, std::strlen(kImportDll));

    append_section(out, ".idata", std::move(body), kDataSection);
    out.opt.set_dir(kDirImport, {base, static_cast<std::uint32_t>(desc_bytes)});
    return out;
}

std::optional<PeFile> do_rename_section(const PeFile& pe, std::uint32_t param) {
    if (pe.sections.empty()) return std::nullopt;
    const std::size_t idx = (param / 8) % pe.sections.size();
    const std::string name = kSectionNames[param % 8];
    if (pe.sections[idx].name_string() == name) return std::nullopt;
    PeFile out = pe;
    out.sections[idx].set_name(name);
    return out;
}

std::optional<PeFile> do_append_slack(const PeFile& pe, std::uint32_t param) {
    const std::uint32_t p = kSlackSizes[param];
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        const Bytes& slack = pe.section_slack[i];
        const std::size_t n = std::min<std::size_t>(p, slack.size());
        bool dirty = false;
        for (std::size_t j = 0; j < n; ++j)
            if (slack[j] != kFillByte) { dirty = true; break; }
        if (!dirty) continue;
        PeFile out = pe;
        std::fill_n(out.section_slack[i].begin(), n, kFillByte);
        return out;
    }
    return std::nullopt;
}

std::optional<PeFile> do_new_entry_point(const PeFile& pe, std::uint32_t param) {
    if (pe.header_pad.size() < kSectionHeaderSize)
        throw LayoutConflict("no header slack left to grow the section table");
    PeFile out = pe;
    const std::uint32_t old_ep = out.opt.entry_point_rva();
    const std::uint32_t va = out.next_virtual_address();

    Bytes stub(16, kFillByte);
    stub[0] = 0xE9;
    write_u32(stub.data() + 1, old_ep - (va + 5));
    stub[8] = 'E';
    stub[9] = 'P';
    stub[10] = '!';
    stub[11] = 0;
    write_u32(stub.data() + 12, old_ep);

    const std::size_t idx = append_section(out, kEntryStubNames[param], std::move(stub), kCodeSection);
    out.opt.set_entry_point_rva(out.sections[idx].virtual_address);
    return out;
}

std::optional<PeFile> do_remove_signature(const PeFile& pe) {
    if (pe.certificate.empty()) return std::nullopt;
    PeFile out = pe;
    out.certificate.clear();
    out.opt.set_dir(kDirSecurity, {0, 0});
    return out;
}

std::optional<PeFile> do_strip_debug(const PeFile& pe) {
    if (pe.opt.data_directory_count() <= kDirDebug) return std::nullopt;
    const DataDirectory d = pe.opt.dir(kDirDebug);
    if (d.rva == 0 && d.size == 0) return std::nullopt;
    PeFile out = pe;
    auto sec = out.rva_to_section(d.rva);
    if (sec && d.size % 28 == 0 && d.size <= 28 * 16) {
        const std::size_t off = d.rva - out.sections[*sec].virtual_address;
        Bytes& table_body = out.section_data[*sec];
        if (off + d.size <= table_body.size()) {
            for (std::uint32_t j = 0; j < d.size / 28; ++j) {
                const std::uint8_t* e = table_body.data() + off + j * 28;
                const std::uint32_t blob_size = read_u32(e + 16);
                const std::uint32_t blob_off = read_u32(e + 24);
                for (std::size_t k = 0; k < out.sections.size(); ++k) {
                    const auto& h = out.sections[k];
                    if (h.raw_size == 0 || blob_off < h.raw_offset) continue;
                    if (static_cast<std::uint64_t>(blob_off) + blob_size >
                        static_cast<std::uint64_t>(h.raw_offset) + h.raw_size)
                        continue;
                    std::memset(out.section_data[k].data() + (blob_off - h.raw_offset), 0,
                                blob_size);
                    break;
                }
            }
            std::memset(table_body.data() + off, 0, d.size);
        }
    }
    out.opt.set_dir(kDirDebug, {0, 0});
    return out;
}

std::optional<PeFile> do_pack(const PeFile& pe) {
    bool any = false;
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        if (pe.sections[i].raw_size == 0) continue;
        if (has_pack_marker(pe.section_data[i])) return std::nullopt;
        any = true;
    }
    if (!any) return std::nullopt;

    PeFile out = pe;
    const std::uint32_t falign = out.opt.file_alignment();
    for (std::size_t i = 0; i < out.sections.size(); ++i) {
        if (out.sections[i].raw_size == 0) continue;
        const Bytes rle = rle_encode(out.section_data[i]);
        Bytes np;
        np.reserve(16 + rle.size() + out.section_slack[i].size());
        np.insert(np.end(), kPackMagic, kPackMagic + 8);
        np.resize(16);
        write_u32(np.data() + 8, out.sections[i].raw_size);
        write_u32(np.data() + 12, static_cast<std::uint32_t>(rle.size()));
        np.insert(np.end(), rle.begin(), rle.end());
        // carry the old slack so unpacking can restore it byte for byte
        np.insert(np.end(), out.section_slack[i].begin(), out.section_slack[i].end());
        out.sections[i].raw_size = static_cast<std::uint32_t>(np.size());
        out.section_slack[i].assign(alignment_gap(np.size(), falign), 0);
        out.section_data[i] = std::move(np);
    }
    relayout_sections(out);
    return out;
}

std::optional<PeFile> do_unpack(const PeFile& pe) {
    PeFile out = pe;
    const std::uint32_t falign = out.opt.file_alignment();
    bool any = false;
    for (std::size_t i = 0; i < out.sections.size(); ++i) {
        if (out.sections[i].raw_size == 0) continue;
        const Bytes& body = out.section_data[i];
        if (!has_pack_marker(body)) continue;
        const std::uint32_t orig = read_u32(body.data() + 8);
        const std::uint32_t blen = read_u32(body.data() + 12);
        if (16 + static_cast<std::size_t>(blen) > body.size()) return std::nullopt;
        auto decoded = rle_decode(body.data() + 16, blen);
        if (!decoded || decoded->size() != orig) return std::nullopt;
        Bytes carry(body.begin() + 16 + blen, body.end());
        if (carry.size() != alignment_gap(orig, falign)) return std::nullopt;
        out.sections[i].raw_size = orig;
        out.section_data[i] = std::move(*decoded);
        out.section_slack[i] = std::move(carry);
        any = true;
    }
    if (!any) return std::nullopt;
    relayout_sections(out);
    return out;
}

std::optional<PeFile> do_set_checksum(const PeFile& pe, std::uint32_t param) {
    std::uint32_t value = 0;
    switch (param) {
    case 0: value = 0; break;
    case 1: {
        const Bytes image = serialize_pe(pe);
        value = pe_checksum_core(image, pe.checksum_field_offset());
        break;
    }
    case 2: value = 0xDEADBEEF; break;
    default: value = 0x1; break;
    }
    if (pe.opt.checksum() == value) return std::nullopt;
    PeFile out = pe;
    out.opt.set_checksum(value);
    return out;
}

std::optional<PeFile> do_append_overlay(const PeFile& pe, std::uint32_t param) {
    PeFile out = pe;
    out.overlay.insert(out.overlay.end(), kOverlaySizes[param], kFillByte);
    return out;
}

std::optional<PeFile> apply_impl(const PeFile& pe, ActionKind kind, std::uint32_t param) {
    std::optional<PeFile> out;
    switch (kind) {
    case ActionKind::AddImport: out = do_add_import(pe, param); break;
    case ActionKind::RenameSection: out = do_rename_section(pe, param); break;
    case ActionKind::AppendSectionSlack: out = do_append_slack(pe, param); break;
    case ActionKind::NewEntryPoint: out = do_new_entry_point(pe, param); break;
    case ActionKind::RemoveSignature: out = do_remove_signature(pe); break;
    case ActionKind::StripDebug: out = do_strip_debug(pe); break;
    case ActionKind::Pack: out = do_pack(pe); break;
    case ActionKind::Unpack: out = do_unpack(pe); break;
    case ActionKind::SetChecksum: out = do_set_checksum(pe, param); break;
    case ActionKind::AppendOverlay: out = do_append_overlay(pe, param); break;
    case ActionKind::NoOp: break;
    }
    if (out) out->validate();
    return out;
}

void check_param(ActionKind kind, std::uint32_t param) {
    if (param >= descriptor(kind).param_pool_size)
        throw ConfigError(std::string("parameter index out of pool for ") + descriptor(kind).name);
}

} // namespace

const std::array<ActionDescriptor, kActionKindCount>& action_descriptors() {
    return kDescriptors;
}

const ActionDescriptor& descriptor(ActionKind kind) {
    return kDescriptors[static_cast<std::size_t>(kind)];
}

ActionKind action_kind_from_name(const std::string& name) {
    for (const auto& d : kDescriptors)
        if (name == d.name) return d.kind;
    throw ConfigError("unknown action kind: " + name);
}

bool irreversible_application(ActionKind kind, std::uint32_t param) {
    if (kind == ActionKind::RemoveSignature || kind == ActionKind::StripDebug) return true;
    return kind == ActionKind::SetChecksum && param == 0;
}

WeightingMode weighting_mode_from_name(const std::string& name) {
    if (name == "uniform") return WeightingMode::uniform;
    if (name == "validation") return WeightingMode::validation;
    throw ConfigError("unknown weighting mode: " + name);
}

const char* weighting_mode_name(WeightingMode mode) {
    return mode == WeightingMode::uniform ? "uniform" : "validation";
}

bool is_applicable(const PeFile& file, ActionKind kind, std::uint32_t param) {
    check_param(kind, param);
    if (kind == ActionKind::NoOp) return true;
    try {
        return apply_impl(file, kind, param).has_value();
    } catch (const LayoutConflict&) {
        return false;
    }
}

PeFile apply_action(const PeFile& file, ActionKind kind, std::uint32_t param) {
    check_param(kind, param);
    auto out = apply_impl(file, kind, param);
    return out ? std::move(*out) : file;
}

ApplyOutcome apply_sequence(const PeFile& file, const ActionSequence& seq) {
    ApplyOutcome out{file, {}, 0, false};
    out.applied.reserve(seq.genes.size());
    const Bytes before = serialize_pe(file);
    for (const ActionGene& g : seq.genes) {
        check_param(g.kind, g.param);
        if (g.kind == ActionKind::NoOp) {
            out.applied.push_back(true);
            continue;
        }
        std::optional<PeFile> next;
        try {
            next = apply_impl(out.result, g.kind, g.param);
        } catch (const LayoutConflict&) {
            next.reset();
        }
        if (next) {
            out.result = std::move(*next);
            out.applied.push_back(true);
            if (irreversible_application(g.kind, g.param)) out.hit_irreversible = true;
        } else {
            out.applied.push_back(false);
        }
    }
    out.modified_bytes = byte_diff_count(before, serialize_pe(out.result));
    return out;
}

std::array<double, kActionKindCount> action_weights(WeightingMode mode) {
    std::array<double, kActionKindCount> w{};
    for (std::size_t i = 0; i < kActionKindCount; ++i)
        w[i] = mode == WeightingMode::uniform ? 1.0 / kActionKindCount : kDescriptors[i].weight;
    return w;
}

std::string describe_gene(ActionGene gene) {
    const auto& d = descriptor(gene.kind);
    switch (gene.kind) {
    case ActionKind::AddImport:
        return std::string(d.name) + "(" + kImportNames[gene.param] + ")";
    case ActionKind::RenameSection:
        return std::string(d.name) + "(slot" + std::to_string(gene.param / 8) + "," +
               kSectionNames[gene.param % 8] + ")";
    case ActionKind::AppendSectionSlack:
        return std::string(d.name) + "(" + std::to_string(kSlackSizes[gene.param]) + ")";
    case ActionKind::NewEntryPoint:
        return std::string(d.name) + "(" + kEntryStubNames[gene.param] + ")";
    case ActionKind::SetChecksum:
        return std::string(d.name) + "(" + kChecksumModes[gene.param] + ")";
    case ActionKind::AppendOverlay:
        return std::string(d.name) + "(" + std::to_string(kOverlaySizes[gene.param]) + ")";
    default:
        return d.name;
    }
}

std::string describe_sequence(const ActionSequence& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.genes.size(); ++i) {
        if (i) out += " ";
        out += describe_gene(seq.genes[i]);
    }
    return out;
}

std::vector<std::string> param_pool_entries(ActionKind kind) {
    std::vector<std::string> out;
    for (std::uint32_t p = 0; p < descriptor(kind).param_pool_size; ++p)
        out.push_back(describe_gene({kind, p}));
    return out;
}

} // namespace evh
