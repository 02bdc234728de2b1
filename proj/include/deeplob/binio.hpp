#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "deeplob/error.hpp"

namespace deeplob {

// Little-endian primitive writer/reader shared by the binary file formats.
namespace detail {

class LeWriter {
public:
    explicit LeWriter(std::ostream& out) : out_(out) {}

    template <typename U>
    void put(U v) {
        static_assert(std::is_integral_v<U>);
        using UU = std::make_unsigned_t<U>;
        auto u = static_cast<UU>(v);
        unsigned char b[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), sizeof(U));
    }

    void put_f32(float f) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put(u);
    }

    void put_f64(double f) {
        std::uint64_t u;
        std::memcpy(&u, &f, 8);
        put(u);
    }

    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

private:
    std::ostream& out_;
};

class LeReader {
public:
    LeReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename U>
    U get() {
        static_assert(std::is_integral_v<U>);
        unsigned char b[sizeof(U)];
        fill(b, sizeof(U));
        std::make_unsigned_t<U> u = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<std::make_unsigned_t<U>>(b[i]) << (8 * i);
        return static_cast<U>(u);
    }

    float get_f32() {
        const auto u = get<std::uint32_t>();
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }

    double get_f64() {
        const auto u = get<std::uint64_t>();
        double f;
        std::memcpy(&f, &u, 8);
        return f;
    }

    std::string get_string(std::size_t max_len = 1 << 20) {
        const auto n = get<std::uint32_t>();
        if (n > max_len) throw ParseError(what_ + ": implausible string length");
        std::string s(n, '\0');
        fill(s.data(), n);
        return s;
    }

    void fill(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError(what_ + ": truncated file");
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::string what_;
};

}  // namespace detail

// 64-bit FNV-1a, used as a corruption check on binary containers.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace deeplob
