#include "evh/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evh/errors.hpp"
#include "evh/rng.hpp"

namespace evh {

namespace {

constexpr std::uint32_t kFileAlign = 512;
constexpr std::uint32_t kSectionAlign = 4096;
constexpr std::size_t kSpareHeaderSlots = 16;

const char* kStdSectionNames[5] = {".text", ".data", ".rdata", ".rsrc", ".idata"};
const char* kOddSectionNames[5] = {".code", ".blob", ".pad0", ".heap", ".bss0"};

// Benign binaries mostly keep the linker's standard section names; malware
// tooling typically mangles several of them.  Mangled names are drawn without
// repeats so each one is its own fingerprint.
std::vector<const char*> plan_section_names(std::size_t n, bool benign, Rng& rng) {
    std::vector<const char*> names(n, kStdSectionNames[1]);
    names[0] = kStdSectionNames[0];
    std::size_t n_odd;
    if (benign) {
        const double r = rng.uniform();
        n_odd = r < 0.30 ? 1 : r < 0.38 ? 2 : 0;
    } else {
        n_odd = n >= 4 ? 3 : 2;
    }
    bool name_used[5] = {false, false, false, false, false};
    std::size_t placed = 0;
    while (placed < n_odd && n > 1) {
        const std::size_t idx = 1 + rng.below(static_cast<std::uint32_t>(n - 1));
        if (names[idx] != kStdSectionNames[1]) continue;  // already mangled
        std::size_t pick = rng.below(5);
        while (name_used[pick]) pick = rng.below(5);
        name_used[pick] = true;
        names[idx] = kOddSectionNames[pick];
        ++placed;
    }
    return names;
}

const char* kImportDlls[6] = {"kernel32.dll", "user32.dll", "advapi32.dll",
                              "gdi32.dll",    "shell32.dll", "comctl32.dll"};
const char* kImportFuncs[6] = {"ExitProcess", "MessageBoxA",   "RegQueryValueExA",
                               "TextOutA",    "ShellExecuteA", "InitCommonControls"};

const std::uint8_t kMotifs[4][8] = {
    {0xD3, 0xAD, 0xC0, 0xDE, 0x55, 0xAA, 0x0F, 0x1E},
    {0xBA, 0xDF, 0x00, 0x0D, 0xCA, 0xFE, 0xB3, 0xEF},
    {'U', 'P', 'X', '!', 'L', 'Z', '9', '0'},
    {0xE8, 0x00, 0x00, 0x00, 0x00, 0x5B, 0x81, 0xC3},
};

Bytes dos_stub_template() {
    Bytes stub(64, 0);
    const std::uint8_t code[] = {0x0E, 0x1F, 0xBA, 0x0E, 0x00, 0xB4, 0x09,
                                 0xCD, 0x21, 0xB8, 0x01, 0x4C, 0xCD, 0x21};
    std::memcpy(stub.data(), code, sizeof(code));
    const char* msg = "This program cannot be run in DOS mode.";
    std::memcpy(stub.data() + sizeof(code), msg, std::min<std::size_t>(std::strlen(msg), 48));
    stub[62] = '\r';
    stub[63] = '\n';
    return stub;
}

// with_motifs sprinkles recognisable 8-byte fragments (packer banners,
// shellcode idioms) into the noise at the signal rate; plain payloads are
// noise alone. Both classes produce both kinds, at different rates.
Bytes build_payload(std::size_t size, bool with_motifs, double signal, Rng& rng) {
    Bytes out;
    out.reserve(size + 16);
    while (out.size() < size) {
        if (with_motifs && rng.coin(signal)) {
            const std::uint8_t* m = kMotifs[rng.below(4)];
            out.insert(out.end(), m, m + 8);
            for (int j = 0; j < 8; ++j)
                out.push_back(static_cast<std::uint8_t>(rng.below(0xC0)));
        } else {
            for (int j = 0; j < 16; ++j)
                out.push_back(static_cast<std::uint8_t>(rng.below(0xC0)));
        }
    }
    out.resize(size);
    // keep the pack marker magic unreachable in fresh payloads
    if (out.size() >= 8 && std::memcmp(out.data(), "RLEPACK1", 8) == 0) out[0] ^= 0xFF;
    return out;
}

// Run-length pair stream over noise, the texture a packer leaves behind,
// minus the magic so the unpack action stays inapplicable here. Compressed
// payloads carry no readable class content; only the wrapper is visible.
Bytes packed_texture(std::size_t size, Rng& rng) {
    Bytes raw(size, 0);
    for (auto& b : raw) b = static_cast<std::uint8_t>(rng.below(0xC0));
    Bytes out;
    out.reserve(size + 2);
    std::size_t i = 0;
    while (out.size() < size && i < raw.size()) {
        std::size_t run = 1;
        while (run < 255 && i + run < raw.size() && raw[i + run] == raw[i]) ++run;
        out.push_back(static_cast<std::uint8_t>(run));
        out.push_back(raw[i]);
        i += run;
    }
    while (out.size() < size) {
        out.push_back(1);
        out.push_back(static_cast<std::uint8_t>(rng.below(0xC0)));
    }
    out.resize(size);
    if (out.size() >= 8 && std::memcmp(out.data(), "RLEPACK1", 8) == 0) out[0] ^= 0xFF;
    return out;
}

std::string class_file_name(std::uint64_t id, int label, std::size_t n_malware) {
    char buf[32];
    if (label == 0)
        std::snprintf(buf, sizeof(buf), "mal_%04llu.bin", static_cast<unsigned long long>(id));
    else
        std::snprintf(buf, sizeof(buf), "ben_%04llu.bin",
                      static_cast<unsigned long long>(id - n_malware));
    return buf;
}

std::string split_name_checked(const std::string& s) {
    if (s != "none" && s != "train" && s != "validation" && s != "holdout")
        throw Error("unknown split name: " + s);
    return s;
}

} // namespace

void CorpusConfig::validate() const {
    if (n_malware == 0 || n_benign == 0) throw ConfigError("corpus counts must be positive");
    if (holdout_malware >= n_malware)
        throw ConfigError("holdout must be smaller than the malware count");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
        throw ConfigError("split ratio must lie in (0,1)");
    if (sections_min < 2 || sections_max < sections_min || sections_max > 8)
        throw ConfigError("sections range must satisfy 2 <= min <= max <= 8");
    if (size_min < 2048 || size_max < size_min) throw ConfigError("bad size range");
    if (!(signal_strength >= 0.0 && signal_strength <= 1.0))
        throw ConfigError("signal strength must lie in [0,1]");
}

PeFile generate_sample(const CorpusConfig& cfg, std::uint64_t id, int label) {
    cfg.validate();
    Rng rng = Rng::derive({cfg.seed, 0xC0B905u, id, static_cast<std::uint64_t>(label)});

    const bool plus = rng.coin(0.25);
    const bool benign = label == 1;

    // Structural profile. Benign binaries tend to be signed, carry debug info,
    // import from several DLLs and have a richer section table; malware is
    // mostly bare. The classes overlap, so none of these is decisive alone.
    const std::uint32_t span = static_cast<std::uint32_t>(cfg.sections_max - cfg.sections_min);
    const std::size_t n = cfg.sections_min + rng.below(span + 1);
    const std::size_t budget =
        cfg.size_min + rng.below(static_cast<std::uint32_t>(cfg.size_max - cfg.size_min + 1));
    const bool has_overlay = rng.coin(0.3);
    // First-section content: most benign code is plain, some of it carries
    // the motif fragments too (static strings, packer banners) and a little
    // is packed. Malware leans hard the other way but hits every state.
    const double c_roll = rng.uniform();
    const int content_mode =  // 0 plain, 1 motifs, 2 packed
        benign ? (c_roll < 0.05 ? 2 : c_roll < 0.13 ? 1 : 0)
               : (c_roll < 0.35 ? 2 : c_roll < 0.97 ? 1 : 0);
    const bool is_packed = content_mode == 2;
    // Hygiene markers: certificate, debug directory, correct checksum, import
    // breadth, int3 tail padding. Benign draws each independently; malware
    // redraws until exactly one looks cared-for, so a sample never sits in
    // the well-kept corner of the space, yet every single marker still shows
    // up on both sides.
    static const double kDescCdfBenign[5] = {0.03, 0.15, 0.45, 0.80, 1.0};
    static const double kDescCdfMal[5] = {0.25, 0.55, 0.85, 0.97, 1.0};
    bool has_cert = false;
    bool has_debug = false;
    int checksum_mode = 1;  // 0 good, 1 zero, 2 stale
    std::size_t n_desc = 1;
    std::uint8_t slack_fill = 0x00;
    for (int attempt = 0; attempt < 12; ++attempt) {
        has_cert = rng.coin(benign ? 0.85 : 0.30);
        has_debug = rng.coin(benign ? 0.80 : 0.30);
        const double cs_roll = rng.uniform();
        checksum_mode = benign ? (cs_roll < 0.62 ? 0 : cs_roll < 0.85 ? 1 : 2)
                               : (cs_roll < 0.20 ? 0 : cs_roll < 0.72 ? 1 : 2);
        const double* desc_cdf = benign ? kDescCdfBenign : kDescCdfMal;
        const double d_roll = rng.uniform();
        n_desc = 5;
        for (std::size_t i = 0; i < 5; ++i)
            if (d_roll < desc_cdf[i]) { n_desc = i + 1; break; }
        slack_fill = rng.coin(benign ? 0.60 : 0.30) ? 0xCC : 0x00;
        if (benign) break;
        const int tidy = static_cast<int>(has_cert) + static_cast<int>(has_debug) +
                         static_cast<int>(checksum_mode == 0) + static_cast<int>(n_desc >= 3) +
                         static_cast<int>(slack_fill == 0xCC);
        if (tidy == 1 || tidy == 2) break;
    }
    const std::vector<const char*> section_names = plan_section_names(n, benign, rng);
    // The import table can live in any data section, and a minority of files
    // (stubs, self-extractors) start execution in a later section.
    const std::size_t imp_sec = 1 + rng.below(static_cast<std::uint32_t>(n - 1));
    const bool late_entry = rng.coin(benign ? 0.10 : 0.25);
    const std::size_t entry_sec = late_entry ? 1 + rng.below(static_cast<std::uint32_t>(n - 1)) : 0;

    // Section payload sizes: a meaty first section, the rest sharing the
    // remainder with some jitter.
    std::vector<std::size_t> sizes(n);
    sizes[0] = std::max<std::size_t>(1024, budget * 2 / 5);
    const std::size_t rest = budget > sizes[0] ? budget - sizes[0] : 0;
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t base = std::max<std::size_t>(256, rest / (n - 1));
        const std::size_t jitter = base / 4;
        sizes[i] = base - jitter + rng.below(static_cast<std::uint32_t>(2 * jitter + 1));
    }
    std::size_t imp_need = 64 + 20 * (n_desc + 1) + n_desc * 4 * (plus ? 8 : 4);
    for (std::size_t i = 0; i < n_desc; ++i)
        imp_need += 2 + std::strlen(kImportFuncs[i % 6]) + 1 + std::strlen(kImportDlls[i % 6]) + 1;
    sizes[imp_sec] = std::max(sizes[imp_sec], align_up(imp_need, std::size_t{64}));

    PeFile pe;
    pe.dos_header.fill(0);
    pe.dos_header[0] = 'M';
    pe.dos_header[1] = 'Z';
    write_u16(pe.dos_header.data() + 2, 0x90);
    write_u16(pe.dos_header.data() + 4, 3);
    write_u16(pe.dos_header.data() + 0x18, 0x40);
    write_u32(pe.dos_header.data() + 0x3C, 128);
    pe.dos_stub = dos_stub_template();

    const std::uint16_t opt_size = plus ? 240 : 224;
    pe.coff.machine = plus ? 0x8664 : 0x14C;
    pe.coff.section_count = static_cast<std::uint16_t>(n);
    pe.coff.timestamp = 0x5E000000 + rng.below(0x1000000);
    pe.coff.symbol_table_offset = 0;
    pe.coff.symbol_count = 0;
    pe.coff.optional_header_size = opt_size;
    pe.coff.characteristics = plus ? 0x0022 : 0x0102;

    Bytes& opt = pe.opt.raw;
    opt.assign(opt_size, 0);
    write_u16(opt.data(), plus ? kPe32PlusMagic : kPe32Magic);
    opt[2] = 14;  // linker version
    opt[3] = 0;
    write_u32(opt.data() + 4, align_up<std::uint32_t>(static_cast<std::uint32_t>(sizes[0]), kFileAlign));
    write_u32(opt.data() + 16, 0x1040);  // entry point inside the first section
    write_u32(opt.data() + 20, 0x1000);  // base of code
    if (plus) {
        write_u64(opt.data() + 24, 0x140000000ull);
    } else {
        write_u32(opt.data() + 24, 0x2000);  // base of data
        write_u32(opt.data() + 28, 0x400000);
    }
    write_u32(opt.data() + 32, kSectionAlign);
    write_u32(opt.data() + 36, kFileAlign);
    write_u16(opt.data() + 40, 6);   // OS version
    write_u16(opt.data() + 48, 6);   // subsystem version
    write_u16(opt.data() + 68, 3);   // console subsystem
    write_u16(opt.data() + 70, 0x8140);
    if (plus) {
        write_u64(opt.data() + 72, 0x100000);
        write_u64(opt.data() + 80, 0x1000);
        write_u64(opt.data() + 88, 0x100000);
        write_u64(opt.data() + 96, 0x1000);
        write_u32(opt.data() + 108, 16);
    } else {
        write_u32(opt.data() + 72, 0x100000);
        write_u32(opt.data() + 76, 0x1000);
        write_u32(opt.data() + 80, 0x100000);
        write_u32(opt.data() + 84, 0x1000);
        write_u32(opt.data() + 92, 16);
    }

    const std::size_t header_end = 128 + 4 + kCoffHeaderSize + opt_size + n * kSectionHeaderSize;
    const std::size_t first_raw =
        align_up(header_end + kSpareHeaderSlots * kSectionHeaderSize,
                 static_cast<std::size_t>(kFileAlign));
    pe.header_pad.assign(first_raw - header_end, 0);
    write_u32(opt.data() + 60, static_cast<std::uint32_t>(first_raw));  // size_of_headers

    std::uint32_t va = 0x1000;
    std::size_t raw = first_raw;
    for (std::size_t i = 0; i < n; ++i) {
        SectionHeader s{};
        s.set_name(section_names[i]);
        s.virtual_address = va;
        s.virtual_size = static_cast<std::uint32_t>(sizes[i]);
        s.raw_size = static_cast<std::uint32_t>(sizes[i]);
        s.raw_offset = static_cast<std::uint32_t>(raw);
        s.characteristics = i == 0 ? 0x60000020 : 0xC0000040;
        pe.sections.push_back(s);
        pe.section_data.push_back(i == 0 && is_packed
                                      ? packed_texture(sizes[i], rng)
                                      : build_payload(sizes[i], i == 0 && content_mode == 1,
                                                      cfg.signal_strength, rng));
        pe.section_slack.emplace_back(align_up(raw + sizes[i], static_cast<std::size_t>(kFileAlign)) -
                                          (raw + sizes[i]),
                                      slack_fill);
        va = align_up(va + std::max<std::uint32_t>(static_cast<std::uint32_t>(sizes[i]), 1),
                      kSectionAlign);
        raw = raw + sizes[i] + pe.section_slack.back().size();
    }
    write_u32(opt.data() + 56, va);  // size_of_image
    write_u32(opt.data() + 16, pe.sections[entry_sec].virtual_address + 0x40);

    // Import table: one descriptor per DLL, then the INT/IAT pairs, then
    // hint/name and DLL name strings.
    {
        const std::size_t sec = imp_sec;
        Bytes& body = pe.section_data[sec];
        const std::uint32_t base = pe.sections[sec].virtual_address;
        const std::uint32_t tw = plus ? 8 : 4;
        const std::uint32_t desc_off = 64;
        const std::uint32_t arr_off =
            desc_off + 20 * (static_cast<std::uint32_t>(n_desc) + 1);
        std::uint32_t str = arr_off + static_cast<std::uint32_t>(n_desc) * 4 * tw;
        for (std::size_t i = 0; i < n_desc; ++i) {
            const char* fn = kImportFuncs[i % 6];
            const char* dll = kImportDlls[i % 6];
            const std::uint32_t fn_len = static_cast<std::uint32_t>(std::strlen(fn));
            const std::uint32_t dll_len = static_cast<std::uint32_t>(std::strlen(dll));
            const std::uint32_t int_off = arr_off + static_cast<std::uint32_t>(i) * 4 * tw;
            const std::uint32_t iat_off = int_off + 2 * tw;
            const std::uint32_t hint_off = str;
            const std::uint32_t dll_off = hint_off + 2 + fn_len + 1;
            str = dll_off + dll_len + 1;
            std::uint8_t* d = body.data() + desc_off + i * 20;
            write_u32(d, base + int_off);
            write_u32(d + 4, 0);
            write_u32(d + 8, 0);
            write_u32(d + 12, base + dll_off);
            write_u32(d + 16, base + iat_off);
            if (plus) {
                write_u64(body.data() + int_off, base + hint_off);
                write_u64(body.data() + iat_off, base + hint_off);
            } else {
                write_u32(body.data() + int_off, base + hint_off);
                write_u32(body.data() + iat_off, base + hint_off);
            }
            write_u16(body.data() + hint_off, static_cast<std::uint16_t>(i));
            std::memcpy(body.data() + hint_off + 2, fn, fn_len);
            body[hint_off + 2 + fn_len] = 0;
            std::memcpy(body.data() + dll_off, dll, dll_len);
            body[dll_off + dll_len] = 0;
        }
        std::memset(body.data() + desc_off + n_desc * 20, 0, 20);
        pe.opt.set_dir(kDirImport,
                       {base + desc_off, 20 * (static_cast<std::uint32_t>(n_desc) + 1)});
    }

    if (has_debug) {
        const std::size_t sec = n - 1;
        Bytes& body = pe.section_data[sec];
        const std::uint32_t va_sec = pe.sections[sec].virtual_address;
        const std::uint32_t raw_sec = pe.sections[sec].raw_offset;
        write_u32(body.data() + 4, pe.coff.timestamp);
        write_u32(body.data() + 12, 2);   // codeview
        write_u32(body.data() + 16, 32);  // blob size
        write_u32(body.data() + 20, va_sec + 28);
        write_u32(body.data() + 24, raw_sec + 28);
        std::memcpy(body.data() + 28, "RSDS", 4);
        for (int j = 0; j < 28; ++j)
            body[32 + j] = static_cast<std::uint8_t>(rng.below(0xC0));
        pe.opt.set_dir(kDirDebug, {va_sec, 28});
    }

    if (has_cert) {
        const std::size_t csize = 256 + rng.below(769);
        pe.certificate.resize(csize);
        write_u32(pe.certificate.data(), static_cast<std::uint32_t>(csize));
        write_u16(pe.certificate.data() + 4, 0x200);   // revision
        write_u16(pe.certificate.data() + 6, 0x0002);  // pkcs7
        for (std::size_t j = 8; j < csize; ++j)
            pe.certificate[j] = static_cast<std::uint8_t>(rng.below(0xC0));
        pe.opt.set_dir(kDirSecurity,
                       {static_cast<std::uint32_t>(raw), static_cast<std::uint32_t>(csize)});
    }

    if (has_overlay) {
        const std::size_t osize = 16 + rng.below(241);
        pe.overlay.resize(osize);
        for (std::size_t j = 0; j < osize; ++j)
            pe.overlay[j] = static_cast<std::uint8_t>(rng.below(0xC0));
    }

    const Bytes image = serialize_pe(pe);
    const std::uint32_t good = pe_checksum_core(image, pe.checksum_field_offset());
    if (checksum_mode == 0) {
        pe.opt.set_checksum(good);
    } else if (checksum_mode == 1) {
        pe.opt.set_checksum(0);
    } else {
        // stale: plausible magnitude for the size, but not the right value
        std::uint32_t cs = 2 + rng.below(static_cast<std::uint32_t>(4 * image.size()));
        while (cs == good || cs == 0xDEADBEEF) cs = 2 + rng.below(static_cast<std::uint32_t>(4 * image.size()));
        pe.opt.set_checksum(cs);
    }

    pe.validate();
    return pe;
}

CorpusManifest generate_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    CorpusManifest manifest;
    const std::size_t total = cfg.n_malware + cfg.n_benign;
    for (std::uint64_t id = 0; id < total; ++id) {
        const int label = id < cfg.n_malware ? 0 : 1;
        const PeFile pe = generate_sample(cfg, id, label);
        const Bytes bytes = serialize_pe(pe);
        ManifestEntry e;
        e.path = class_file_name(id, label, cfg.n_malware);
        e.label = label;
        e.split = "none";
        e.digest = fnv1a64(bytes);
        write_file(out_dir + "/" + e.path, bytes);
        manifest.entries.push_back(std::move(e));
    }
    manifest = split_corpus(manifest, cfg.split_ratio, cfg.holdout_malware, cfg.seed);
    save_manifest(out_dir + "/manifest.csv", manifest);
    return manifest;
}

CorpusManifest split_corpus(const CorpusManifest& manifest, double ratio,
                            std::size_t holdout_malware, std::uint64_t seed) {
    std::vector<std::size_t> mal, ben;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        (manifest.entries[i].label == 0 ? mal : ben).push_back(i);
    if (mal.size() <= holdout_malware)
        throw InsufficientSamples("not enough malware for the holdout");

    auto shuffle = [](std::vector<std::size_t>& v, Rng rng) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.below(static_cast<std::uint32_t>(i))]);
    };
    shuffle(mal, Rng::derive({seed, 0x59117u, 0}));
    shuffle(ben, Rng::derive({seed, 0x59117u, 1}));

    CorpusManifest out = manifest;
    const std::size_t mal_rest = mal.size() - holdout_malware;
    const std::size_t mal_train = static_cast<std::size_t>(ratio * mal_rest + 0.5);
    for (std::size_t i = 0; i < mal.size(); ++i) {
        if (i < holdout_malware)
            out.entries[mal[i]].split = "holdout";
        else
            out.entries[mal[i]].split = (i - holdout_malware) < mal_train ? "train" : "validation";
    }
    const std::size_t ben_train = static_cast<std::size_t>(ratio * ben.size() + 0.5);
    for (std::size_t i = 0; i < ben.size(); ++i)
        out.entries[ben[i]].split = i < ben_train ? "train" : "validation";
    return out;
}

void save_manifest(const std::string& path, const CorpusManifest& manifest) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << "path,label,split,digest\n";
    for (const auto& e : manifest.entries)
        f << e.path << "," << (e.label == 0 ? "malware" : "benign") << ","
          << split_name_checked(e.split) << "," << hex64(e.digest) << "\n";
}

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    CorpusManifest out;
    std::string line;
    if (!std::getline(f, line) || line != "path,label,split,digest")
        throw Error("bad manifest header in " + path);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string p, l, s, d;
        if (!std::getline(ss, p, ',') || !std::getline(ss, l, ',') || !std::getline(ss, s, ',') ||
            !std::getline(ss, d))
            throw Error("bad manifest row: " + line);
        ManifestEntry e;
        e.path = p;
        if (l == "malware")
            e.label = 0;
        else if (l == "benign")
            e.label = 1;
        else
            throw Error("bad label in manifest: " + l);
        e.split = split_name_checked(s);
        e.digest = std::stoull(d, nullptr, 16);
        out.entries.push_back(std::move(e));
    }
    return out;
}

std::vector<LabeledSample> load_split(const CorpusManifest& manifest, const std::string& dir,
                                      const std::string& split) {
    std::vector<LabeledSample> out;
    for (const auto& e : manifest.entries) {
        if (!split.empty() && e.split != split) continue;
        Bytes bytes = read_file(dir + "/" + e.path);
        if (fnv1a64(bytes) != e.digest)
            throw Error("digest mismatch for " + e.path);
        out.push_back({std::move(bytes), e.label});
    }
    return out;
}

} // namespace evh
