#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>

#include "deeplob/adam.hpp"
#include "deeplob/binio.hpp"
#include "deeplob/error.hpp"
#include "deeplob/model.hpp"

namespace deeplob {

// Checkpoint container, little-endian:
//   "DLCK" | version u32
//   model config (7 x u64 + f64 slope)
//   params: u32 count, then per tensor {name, dtype u8, rank u32, dims u64..., raw values}
//   adam: step u64, first moments, second moments (same tensor records)
//   rng state string | metadata: u32 count of (key, value) strings
//   FNV-1a 64 of every preceding byte
inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

inline std::string to_string(DType d) { return d == DType::F32 ? "float32" : "float64"; }

template <typename T>
struct Checkpoint {
    DeepLobConfig config;
    ParamList<T> params;
    AdamState<T> adam;
    std::string rng_state;
    std::map<std::string, std::string> meta;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct CheckpointLoadOptions {
    // Loading a checkpoint stored in another precision is refused unless set.
    bool convert_precision = false;
};

namespace detail {

template <typename T>
void put_tensors(LeWriter& w, const ParamList<T>& list) {
    w.put(static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
        w.put_string(p.name);
        w.put(static_cast<std::uint8_t>(dtype_of<T>()));
        w.put(static_cast<std::uint32_t>(p.value.shape().size()));
        for (auto d : p.value.shape()) w.put(static_cast<std::uint64_t>(d));
        for (T v : p.value.vec()) {
            if constexpr (std::is_same_v<T, float>) {
                w.put_f32(v);
            } else {
                w.put_f64(v);
            }
        }
    }
}

template <typename T>
ParamList<T> get_tensors(LeReader& r, bool convert, const std::string& what) {
    const auto count = r.get<std::uint32_t>();
    if (count > 4096) throw CheckpointError(what + ": implausible tensor count");
    ParamList<T> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor<T> nt;
        nt.name = r.get_string(4096);
        const auto dt = static_cast<DType>(r.get<std::uint8_t>());
        if (dt != DType::F32 && dt != DType::F64) throw CheckpointError(what + ": unknown dtype for " + nt.name);
        if (dt != dtype_of<T>() && !convert) {
            throw CheckpointError(what + ": tensor " + nt.name + " is " + to_string(dt) + ", requested " +
                                  to_string(dtype_of<T>()) + "; pass the precision-conversion flag to convert");
        }
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw CheckpointError(what + ": implausible rank for " + nt.name);
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.get<std::uint64_t>());
            if (d > (std::size_t{1} << 28)) throw CheckpointError(what + ": implausible dimension for " + nt.name);
            n *= d;
        }
        nt.value = Tensor<T>(shape);
        for (std::size_t j = 0; j < n; ++j) {
            nt.value[j] = dt == DType::F32 ? static_cast<T>(r.get_f32()) : static_cast<T>(r.get_f64());
        }
        out.push_back(std::move(nt));
    }
    return out;
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
    std::ostringstream os(std::ios::binary);
    detail::LeWriter w(os);
    w.raw(kCheckpointMagic.data(), 4);
    w.put(kCheckpointVersion);
    const auto& c = ck.config;
    for (std::size_t v : {c.input_time, c.input_features, c.conv_width, c.inception_width, c.lstm_hidden,
                          c.temporal_kernel, c.classes}) {
        w.put(static_cast<std::uint64_t>(v));
    }
    w.put_f64(c.leaky_slope);
    detail::put_tensors(w, ck.params);
    w.put(ck.adam.step);
    detail::put_tensors(w, ck.adam.first_moment);
    detail::put_tensors(w, ck.adam.second_moment);
    w.put_string(ck.rng_state);
    w.put(static_cast<std::uint32_t>(ck.meta.size()));
    for (const auto& [k, v] : ck.meta) {
        w.put_string(k);
        w.put_string(v);
    }
    std::string body = os.str();
    const std::uint64_t sum = fnv1a64(body.data(), body.size());
    std::ostringstream tail(std::ios::binary);
    detail::LeWriter(tail).put(sum);
    return body + tail.str();
}

template <typename T>
Checkpoint<T> deserialize_checkpoint(const std::string& bytes, const CheckpointLoadOptions& opt = {},
                                     const std::string& what = "checkpoint") {
    if (bytes.size() < 16) throw CheckpointError(what + ": corrupt file (too short)");
    if (std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) throw CheckpointError(what + ": not a checkpoint (bad magic)");
    const std::size_t body_len = bytes.size() - 8;
    std::istringstream tail(bytes.substr(body_len), std::ios::binary);
    const auto stored = detail::LeReader(tail, what).get<std::uint64_t>();
    if (stored != fnv1a64(bytes.data(), body_len)) throw CheckpointError(what + ": corrupt file (checksum mismatch)");

    std::istringstream in(bytes.substr(0, body_len), std::ios::binary);
    detail::LeReader r(in, what);
    Checkpoint<T> ck;
    try {
        std::array<char, 4> magic{};
        r.fill(magic.data(), 4);
        const auto version = r.get<std::uint32_t>();
        if (version != kCheckpointVersion) {
            throw CheckpointError(what + ": unsupported version " + std::to_string(version));
        }
        auto& c = ck.config;
        for (std::size_t* f : {&c.input_time, &c.input_features, &c.conv_width, &c.inception_width, &c.lstm_hidden,
                               &c.temporal_kernel, &c.classes}) {
            *f = static_cast<std::size_t>(r.get<std::uint64_t>());
        }
        c.leaky_slope = r.get_f64();
        ck.params = detail::get_tensors<T>(r, opt.convert_precision, what);
        ck.adam.step = r.get<std::uint64_t>();
        ck.adam.first_moment = detail::get_tensors<T>(r, opt.convert_precision, what);
        ck.adam.second_moment = detail::get_tensors<T>(r, opt.convert_precision, what);
        ck.rng_state = r.get_string();
        const auto n_meta = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n_meta; ++i) {
            auto k = r.get_string();
            ck.meta[k] = r.get_string();
        }
        if (!r.at_end()) throw CheckpointError(what + ": trailing bytes");
    } catch (const ParseError& e) {
        throw CheckpointError(std::string(e.what()));
    }
    // Shape plan check: the tensors must fit the stored architecture.
    try {
        (void)DeepLob<T>::from_params(ck.config, ck.params);
    } catch (const Error& e) {
        throw CheckpointError(what + ": parameters do not match the stored model config: " + e.what());
    }
    if (!ck.adam.first_moment.empty() || !ck.adam.second_moment.empty()) {
        auto same_layout = [&](const ParamList<T>& m) {
            if (m.size() != ck.params.size()) return false;
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (m[i].name != ck.params[i].name || m[i].value.shape() != ck.params[i].value.shape()) return false;
            }
            return true;
        };
        if (!same_layout(ck.adam.first_moment) || !same_layout(ck.adam.second_moment)) {
            throw CheckpointError(what + ": optimizer state does not match the parameters");
        }
    }
    return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
    const std::string bytes = serialize_checkpoint(ck);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const CheckpointLoadOptions& opt = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint<T>(buf.str(), opt, path.string());
}

}  // namespace deeplob
