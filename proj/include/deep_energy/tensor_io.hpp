#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"

namespace deep_energy {

// DETF layout:
//   0..3   "DETF"
//   4      version (1)
//   5      dtype (1 = f32 LE, 2 = u8)
//   6..7   zero
//   8..11  u32 LE ndim
//   then ndim x u64 LE dims, then the row-major payload without padding.

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

struct Tensor {
    std::vector<std::uint64_t> shape;
    std::variant<std::vector<float>, std::vector<std::uint8_t>> data;

    DType dtype() const { return std::holds_alternative<std::vector<float>>(data) ? DType::f32 : DType::u8; }

    std::uint64_t element_count() const {
        return std::visit([](const auto& v) { return static_cast<std::uint64_t>(v.size()); }, data);
    }

    const std::vector<float>& f32() const {
        if (const auto* v = std::get_if<std::vector<float>>(&data)) return *v;
        throw DataError("tensor dtype is u8, expected f32");
    }
    const std::vector<std::uint8_t>& u8() const {
        if (const auto* v = std::get_if<std::vector<std::uint8_t>>(&data)) return *v;
        throw DataError("tensor dtype is f32, expected u8");
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

inline constexpr std::array<char, 4> kDetfMagic = {'D', 'E', 'T', 'F'};
inline constexpr std::uint8_t kDetfVersion = 1;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
    return value;
}

// Product of dims, or false on u64 overflow.
inline bool checked_product(const std::vector<std::uint64_t>& dims, std::uint64_t& product) {
    product = 1;
    for (auto d : dims) {
        if (d != 0 && product > std::numeric_limits<std::uint64_t>::max() / d) return false;
        product *= d;
    }
    return true;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    std::uint64_t count = 0;
    if (!detail::checked_product(t.shape, count)) throw DataError("tensor dimension product overflows");
    if (count != t.element_count()) {
        throw DataError("tensor shape product " + std::to_string(count) + " does not match data length " +
                        std::to_string(t.element_count()));
    }
    std::vector<std::uint8_t> out(detail::kDetfMagic.begin(), detail::kDetfMagic.end());
    out.push_back(detail::kDetfVersion);
    out.push_back(static_cast<std::uint8_t>(t.dtype()));
    out.push_back(0);
    out.push_back(0);
    detail::put_le(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le(out, d);
    if (t.dtype() == DType::f32) {
        for (float v : t.f32()) detail::put_le(out, std::bit_cast<std::uint32_t>(v));
    } else {
        const auto& v = t.u8();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

inline Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw DataError("DETF: truncated header");
    if (!std::equal(detail::kDetfMagic.begin(), detail::kDetfMagic.end(), bytes.begin())) {
        throw DataError("DETF: bad magic");
    }
    if (bytes[4] != detail::kDetfVersion) throw DataError("DETF: unsupported version " + std::to_string(bytes[4]));
    const std::uint8_t code = bytes[5];
    if (code != static_cast<std::uint8_t>(DType::f32) && code != static_cast<std::uint8_t>(DType::u8)) {
        throw DataError("DETF: unknown dtype code " + std::to_string(code));
    }
    if (bytes[6] != 0 || bytes[7] != 0) throw DataError("DETF: reserved header bytes must be zero");
    const auto ndim = detail::get_le<std::uint32_t>(bytes.data() + 8);
    const std::uint64_t header = 12 + 8ULL * ndim;
    if (bytes.size() < header) throw DataError("DETF: truncated dimension list");

    Tensor t;
    t.shape.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) t.shape[i] = detail::get_le<std::uint64_t>(bytes.data() + 12 + 8 * i);
    std::uint64_t count = 0;
    if (!detail::checked_product(t.shape, count)) throw DataError("DETF: dimension overflow");
    const std::uint64_t elem = code == static_cast<std::uint8_t>(DType::f32) ? 4 : 1;
    if (count > std::numeric_limits<std::uint64_t>::max() / elem) throw DataError("DETF: dimension overflow");
    const std::uint64_t payload = count * elem;
    const std::uint64_t available = bytes.size() - header;
    if (available < payload) throw DataError("DETF: truncated payload");
    if (available > payload) throw DataError("DETF: trailing bytes after payload");

    const std::uint8_t* p = bytes.data() + header;
    if (code == static_cast<std::uint8_t>(DType::f32)) {
        std::vector<float> v(count);
        for (std::uint64_t i = 0; i < count; ++i) v[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
        t.data = std::move(v);
    } else {
        t.data = std::vector<std::uint8_t>(p, p + count);
    }
    return t;
}

inline void write_tensor(const std::string& path, const Tensor& t) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_tensor(bytes);
    } catch (const DataError& e) {
        throw DataError("'" + path + "': " + e.what());
    }
}

// Field <-> tensor conversions. Probability fields are [H, W, L]; mattes are [H, W].

inline Tensor to_tensor(const ProbabilityField& y) {
    std::vector<float> v(y.data().begin(), y.data().end());
    return {{y.height(), y.width(), y.depth()}, std::move(v)};
}

inline Tensor to_tensor(const AlphaMatte& a) {
    std::vector<float> v(a.data().begin(), a.data().end());
    return {{a.height(), a.width()}, std::move(v)};
}

inline ProbabilityField probability_field_from(const Tensor& t) {
    if (t.shape.size() != 3) throw DataError("probability tensor must have shape [H, W, L]");
    const auto& v = t.f32();
    return ProbabilityField(t.shape[0], t.shape[1], t.shape[2], std::vector<double>(v.begin(), v.end()));
}

inline AlphaMatte alpha_matte_from(const Tensor& t) {
    if (t.shape.size() == 3 && t.shape[2] == 1) {
        const auto& v = t.f32();
        return AlphaMatte(t.shape[0], t.shape[1], 1, std::vector<double>(v.begin(), v.end()));
    }
    if (t.shape.size() != 2) throw DataError("alpha tensor must have shape [H, W]");
    const auto& v = t.f32();
    return AlphaMatte(t.shape[0], t.shape[1], 1, std::vector<double>(v.begin(), v.end()));
}

} // namespace deep_energy
