#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "deeplob/binio.hpp"
#include "deeplob/data.hpp"
#include "deeplob/error.hpp"

namespace deeplob {

// Canonical per-day file, little-endian:
//   "LOB1" | version u32 | n_events u64 | n_features u32
//   n_events * n_features float32 (row-major)
//   n_horizons u32, then per horizon: k u32, n_events int8 labels (127 = none)
//   optional trailer: "TS64" | n_events int64 timestamps
inline constexpr std::array<char, 4> kLobMagic{'L', 'O', 'B', '1'};
inline constexpr std::uint32_t kLobVersion = 1;
inline constexpr std::int8_t kNoLabel = 127;

inline void write_lob_day(std::ostream& out, const SeriesDay& day) {
    day.validate();
    detail::LeWriter w(out);
    w.raw(kLobMagic.data(), 4);
    w.put(kLobVersion);
    w.put(static_cast<std::uint64_t>(day.n_events()));
    w.put(static_cast<std::uint32_t>(day.n_features));
    for (double v : day.features) w.put_f32(static_cast<float>(v));
    w.put(static_cast<std::uint32_t>(day.labels.size()));
    for (const auto& [k, seq] : day.labels) {
        w.put(static_cast<std::uint32_t>(k));
        for (const auto& l : seq) w.put(static_cast<std::int8_t>(l ? *l : kNoLabel));
    }
    if (!day.timestamps.empty()) {
        w.raw("TS64", 4);
        for (auto t : day.timestamps) w.put(t);
    }
    if (!out) throw IoError("write failed for day " + day.day_id);
}

inline SeriesDay read_lob_day(std::istream& in, const std::string& day_id) {
    detail::LeReader r(in, day_id);
    std::array<char, 4> magic{};
    r.fill(magic.data(), 4);
    if (magic != kLobMagic) throw ParseError(day_id + ": not a LOB1 file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kLobVersion) throw ParseError(day_id + ": unsupported LOB1 version " + std::to_string(version));
    const auto n = r.get<std::uint64_t>();
    const auto f = r.get<std::uint32_t>();
    if (f != kFeatures) throw ParseError(day_id + ": expected 40 features, file has " + std::to_string(f));
    if (n == 0 || n > (std::uint64_t{1} << 32)) throw ParseError(day_id + ": implausible event count " + std::to_string(n));
    SeriesDay d;
    d.day_id = day_id;
    d.n_features = f;
    d.features.resize(n * f);
    for (auto& v : d.features) v = r.get_f32();
    const auto n_h = r.get<std::uint32_t>();
    if (n_h > 64) throw ParseError(day_id + ": implausible horizon count");
    for (std::uint32_t h = 0; h < n_h; ++h) {
        const auto k = static_cast<int>(r.get<std::uint32_t>());
        std::vector<std::int8_t> raw(n);
        r.fill(raw.data(), n);
        LabelSeq seq(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (raw[i] == kNoLabel) continue;
            if (raw[i] < -1 || raw[i] > 1) throw ParseError(day_id + ": label out of range at k=" + std::to_string(k));
            seq[i] = raw[i];
        }
        d.labels[k] = std::move(seq);
    }
    if (!r.at_end()) {
        std::array<char, 4> tag{};
        r.fill(tag.data(), 4);
        if (std::memcmp(tag.data(), "TS64", 4) != 0) throw ParseError(day_id + ": unknown trailer section");
        d.timestamps.resize(n);
        for (auto& t : d.timestamps) t = r.get<std::int64_t>();
        if (!r.at_end()) throw ParseError(day_id + ": trailing bytes after timestamps");
    }
    d.recompute_mids();
    d.validate();
    return d;
}

inline void save_lob_day(const std::filesystem::path& path, const SeriesDay& day) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    write_lob_day(out, day);
}

inline SeriesDay load_lob_day(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_lob_day(in, path.stem().string());
}

// All *.lob files in a directory, sorted by name (day order).
inline std::vector<SeriesDay> load_lob_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".lob") files.push_back(e.path());
    }
    if (files.empty()) throw IoError("no .lob files in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<SeriesDay> days;
    for (const auto& p : files) days.push_back(load_lob_day(p));
    return days;
}

}  // namespace deeplob
