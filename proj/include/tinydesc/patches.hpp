#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/io.hpp"
#include "tinydesc/rng.hpp"
#include "tinydesc/synth.hpp"

namespace tinydesc {

// Full identity of a patch class: aligned windows cut at the same place from
// the same variant of the same source group.
struct Provenance {
    std::uint64_t group_id = 0;
    float scale = 1.f;
    int rotation_deg = 0;
    bool inverted = false;
    int x = 0;
    int y = 0;

    bool operator==(const Provenance&) const = default;
};

struct PatchDataset {
    std::vector<Patch> patches;
    std::vector<std::uint32_t> class_of;              // per patch
    std::vector<std::vector<std::uint32_t>> classes;  // class -> patch indices
    std::vector<Provenance> provenance;               // per class
    std::vector<Family> family;                       // per class
    std::vector<std::string> warnings;                // mining notes; not serialized

    std::size_t patch_count() const { return patches.size(); }
    std::size_t class_count() const { return classes.size(); }

    // Patches-per-class histogram with buckets {1, 2, 3, 4+}.
    std::array<std::size_t, 4> class_size_histogram() const {
        std::array<std::size_t, 4> h{};
        for (const auto& c : classes) ++h[std::min<std::size_t>(c.size(), 4) - 1];
        return h;
    }
};

struct MiningConfig {
    int stride = 24;
    std::vector<float> scales = {1.0f, 0.75f, 1.5f};
    std::vector<int> rotations = {0, 90, 180, 270};
    float invert_fraction = 0.25f;
};

// Mines class-labeled 32x32 patches. Windows cut from aligned duplicates of
// one group under the same (scale, rotation, inversion) variant land in the
// same class. Variants smaller than a patch are skipped with a warning.
inline PatchDataset extract_patches(const std::vector<SourceImage>& sources,
                                    const MiningConfig& cfg, Rng& rng) {
    if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
    if (cfg.scales.empty() || cfg.rotations.empty())
        throw ConfigError("scales and rotations must be non-empty");
    if (sources.empty()) throw ConfigError("no source images to mine");

    // Group by group_id, keeping first-appearance order.
    std::vector<std::uint64_t> group_order;
    std::map<std::uint64_t, std::vector<const SourceImage*>> groups;
    for (const auto& src : sources) {
        auto [it, inserted] = groups.try_emplace(src.group_id);
        if (inserted) group_order.push_back(src.group_id);
        it->second.push_back(&src);
    }

    PatchDataset ds;
    for (const std::uint64_t gid : group_order) {
        const auto& members = groups[gid];
        for (std::size_t m = 1; m < members.size(); ++m)
            if (members[m]->image.height != members[0]->image.height ||
                members[m]->image.width != members[0]->image.width)
                throw ShapeError("group " + std::to_string(gid) + " members are not aligned");

        const bool add_inverted = rng.bernoulli(double(cfg.invert_fraction));
        for (const float scale : cfg.scales) {
            if (!(scale > 0)) throw ConfigError("scales must be positive");
            for (const int rot : cfg.rotations) {
                for (const bool inv : {false, true}) {
                    if (inv && !add_inverted) continue;

                    // Transform every member identically.
                    std::vector<Image8> variant;
                    variant.reserve(members.size());
                    for (const auto* src : members) {
                        const int sh = std::max(1, int(std::lround(src->image.height * double(scale))));
                        const int sw = std::max(1, int(std::lround(src->image.width * double(scale))));
                        Image8 img = resize_bilinear(src->image, sh, sw);
                        img = rotate_right_angle(img, rot);
                        if (inv) img = invert(img);
                        variant.push_back(std::move(img));
                    }
                    if (variant[0].height < kPatchEdge || variant[0].width < kPatchEdge) {
                        std::ostringstream w;
                        w << "group " << gid << " variant scale=" << scale << " rot=" << rot
                          << (inv ? " inv" : "") << " smaller than a patch, skipped";
                        ds.warnings.push_back(w.str());
                        continue;
                    }

                    for (int y = 0; y + kPatchEdge <= variant[0].height; y += cfg.stride)
                        for (int x = 0; x + kPatchEdge <= variant[0].width; x += cfg.stride) {
                            const auto class_id = std::uint32_t(ds.classes.size());
                            ds.classes.emplace_back();
                            ds.provenance.push_back(Provenance{gid, scale, rot, inv, x, y});
                            ds.family.push_back(members[0]->family);
                            for (const auto& img : variant) {
                                const auto patch_id = std::uint32_t(ds.patches.size());
                                ds.patches.push_back(crop_patch(img, y, x));
                                ds.class_of.push_back(class_id);
                                ds.classes[class_id].push_back(patch_id);
                            }
                        }
                }
            }
        }
    }
    if (ds.patches.empty()) throw ConfigError("mining produced no patches (all variants too small?)");
    return ds;
}

// ---------------------------------------------------------------------------
// Serialization.
// Blob <prefix>.tdpd : "TDPD" | u8 version=1 | u64 patch count | N*1024 raw
//                      bytes | u32 crc32 of everything after the version byte.
// Index <prefix>.index : per patch, tab-separated
//                      ordinal class family group scale rotation inverted x y.
// ---------------------------------------------------------------------------

inline constexpr char kDatasetMagic[4] = {'T', 'D', 'P', 'D'};
inline constexpr std::uint8_t kDatasetVersion = 1;

inline std::string dataset_blob_path(const std::string& prefix) { return prefix + ".tdpd"; }
inline std::string dataset_index_path(const std::string& prefix) { return prefix + ".index"; }

inline void save_dataset(const PatchDataset& ds, const std::string& prefix) {
    ByteWriter w;
    w.raw(kDatasetMagic, 4);
    w.u8(kDatasetVersion);
    w.u64(ds.patches.size());
    for (const auto& p : ds.patches) w.raw(p.px.data(), p.px.size());
    const auto body = std::span<const std::uint8_t>(w.bytes()).subspan(5);
    const std::uint32_t crc = crc32(body);
    w.u32(crc);
    write_file(dataset_blob_path(prefix), w.bytes());

    std::ostringstream index;
    index << "# patch index v1: ordinal class family group scale rotation inverted x y\n";
    char scale_buf[32];
    for (std::size_t i = 0; i < ds.patches.size(); ++i) {
        const std::uint32_t c = ds.class_of[i];
        const Provenance& p = ds.provenance[c];
        std::snprintf(scale_buf, sizeof scale_buf, "%.9g", double(p.scale));
        index << i << '\t' << c << '\t' << family_name(ds.family[c]) << '\t' << p.group_id << '\t'
              << scale_buf << '\t' << p.rotation_deg << '\t' << int(p.inverted) << '\t' << p.x
              << '\t' << p.y << '\n';
    }
    write_text_file(dataset_index_path(prefix), index.str());
}

inline PatchDataset load_dataset(const std::string& prefix) {
    const auto blob = read_file(dataset_blob_path(prefix));
    if (blob.size() < 17) throw CorruptFileError("dataset blob truncated");
    if (std::memcmp(blob.data(), kDatasetMagic, 4) != 0)
        throw FormatError("not a patch dataset blob (bad magic)");
    if (blob[4] != kDatasetVersion)
        throw VersionError("unsupported dataset version " + std::to_string(int(blob[4])));
    {
        const auto body = std::span<const std::uint8_t>(blob).subspan(5, blob.size() - 9);
        ByteReader tail(std::span<const std::uint8_t>(blob).subspan(blob.size() - 4));
        if (crc32(body) != tail.u32()) throw CorruptFileError("dataset blob checksum mismatch");
    }
    ByteReader r(std::span<const std::uint8_t>(blob).subspan(5, blob.size() - 9));
    const std::uint64_t n = r.u64();
    if (r.remaining() != n * std::uint64_t(kPatchArea))
        throw CorruptFileError("dataset blob length does not match patch count");

    PatchDataset ds;
    ds.patches.resize(n);
    for (auto& p : ds.patches) r.raw(p.px.data(), p.px.size());
    ds.class_of.resize(n);

    std::ifstream in(dataset_index_path(prefix));
    if (!in) throw IoError("cannot open dataset index: " + dataset_index_path(prefix));
    std::string line;
    std::uint64_t expected_ordinal = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::uint64_t ordinal = 0, group = 0;
        std::uint32_t class_id = 0;
        std::string family;
        float scale = 0;
        int rot = 0, inv = 0, x = 0, y = 0;
        if (!(ls >> ordinal >> class_id >> family >> group >> scale >> rot >> inv >> x >> y))
            throw FormatError("malformed index line: " + line);
        if (ordinal != expected_ordinal || ordinal >= n)
            throw FormatError("index ordinals out of order or out of range");
        ++expected_ordinal;

        if (class_id > ds.classes.size())
            throw FormatError("index class ids are not dense");
        if (class_id == ds.classes.size()) {
            ds.classes.emplace_back();
            ds.provenance.push_back(Provenance{group, scale, rot, inv != 0, x, y});
            ds.family.push_back(family_from_name(family));
        } else if (!(ds.provenance[class_id] == Provenance{group, scale, rot, inv != 0, x, y})) {
            throw FormatError("index provenance disagrees within class " + std::to_string(class_id));
        }
        ds.class_of[ordinal] = class_id;
        ds.classes[class_id].push_back(std::uint32_t(ordinal));
    }
    if (expected_ordinal != n)
        throw CorruptFileError("index lists " + std::to_string(expected_ordinal) +
                               " patches, blob has " + std::to_string(n));
    return ds;
}

}  // namespace tinydesc
