#pragma once

// Versioned binary container of named dense tensors ("NOPC").
//
//   magic    "NOPC"                       4 bytes
//   version  u32 LE
//   metadata u32 LE length + UTF-8 JSON
//   count    u32 LE
//   tensor*  u16 LE name length + UTF-8 name,
//            u8 dtype (0 = f32, 1 = f64), u8 ndim, ndim x u64 LE dims,
//            row-major little-endian payload
//
// Complex tensors carry a trailing dimension of size 2 (real, imag) and a name
// ending in ".c".

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hpl/error.hpp"

namespace hpl {

inline constexpr std::array<char, 4> container_magic{'N', 'O', 'P', 'C'};
inline constexpr std::uint32_t container_version = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

/// Values are held as double in memory; f32 tensors are narrowed on write, which
/// is exact for anything that was read from an f32 payload.
struct Tensor {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    [[nodiscard]] std::size_t numel() const noexcept {
        std::size_t n = 1;
        for (auto d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
    [[nodiscard]] bool is_complex() const noexcept {
        return name.size() >= 2 && name.ends_with(".c") && !dims.empty() && dims.back() == 2;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

[[nodiscard]] inline Tensor make_tensor(std::string name, std::vector<std::uint64_t> dims, std::vector<double> data,
                                        DType dtype = DType::f64) {
    Tensor t{std::move(name), dtype, std::move(dims), std::move(data)};
    if (t.numel() != t.data.size()) {
        throw Error(Errc::shape_mismatch, "tensor '" + t.name + "': dims do not match data size");
    }
    return t;
}

class TensorContainer {
public:
    nlohmann::json metadata = nlohmann::json::object();

    void add(Tensor t) {
        if (find(t.name)) throw Error(Errc::invalid_argument, "duplicate tensor '" + t.name + "'");
        tensors_.push_back(std::move(t));
    }

    [[nodiscard]] const Tensor* find(std::string_view name) const noexcept {
        for (const auto& t : tensors_) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }

    [[nodiscard]] const Tensor& at(std::string_view name) const {
        if (const Tensor* t = find(name)) return *t;
        throw Error(Errc::shape_mismatch, "missing tensor '" + std::string(name) + "'");
    }

    [[nodiscard]] const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    friend bool operator==(const TensorContainer& a, const TensorContainer& b) {
        return a.metadata == b.metadata && a.tensors_ == b.tensors_;
    }

private:
    std::vector<Tensor> tensors_;
};

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> b;
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
}

template <class U>
U get_le(std::istream& is, std::string_view what) {
    std::array<unsigned char, sizeof(U)> b;
    if (!is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()))) {
        throw Error(Errc::truncated_input, "short read in " + std::string(what));
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

inline std::string get_bytes(std::istream& is, std::size_t n, std::string_view what) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
        throw Error(Errc::truncated_input, "short read in " + std::string(what));
    }
    return s;
}

}  // namespace detail

inline void write_container(std::ostream& os, const TensorContainer& c) {
    os.write(container_magic.data(), container_magic.size());
    detail::put_le<std::uint32_t>(os, container_version);
    const std::string meta = c.metadata.dump();
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.tensors().size()));
    for (const auto& t : c.tensors()) {
        if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error(Errc::invalid_argument, "tensor name too long");
        }
        if (t.numel() != t.data.size()) {
            throw Error(Errc::shape_mismatch, "tensor '" + t.name + "': dims do not match data size");
        }
        detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
        detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_le<std::uint64_t>(os, d);
        const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
        std::string raw(t.data.size() * width, '\0');
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const std::uint64_t u = t.dtype == DType::f32
                                        ? std::bit_cast<std::uint32_t>(static_cast<float>(t.data[i]))
                                        : std::bit_cast<std::uint64_t>(t.data[i]);
            for (std::size_t b = 0; b < width; ++b) raw[i * width + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
        }
        os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    }
    if (!os) throw Error(Errc::io_error, "write failed");
}

[[nodiscard]] inline TensorContainer read_container(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size())) throw Error(Errc::truncated_input, "short read in magic");
    if (magic != container_magic) throw Error(Errc::bad_magic, "not a NOPC container");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != container_version) {
        throw Error(Errc::version_mismatch,
                    "container version " + std::to_string(version) + ", expected " + std::to_string(container_version));
    }
    TensorContainer c;
    const auto meta_len = detail::get_le<std::uint32_t>(is, "metadata length");
    const std::string meta = detail::get_bytes(is, meta_len, "metadata");
    try {
        c.metadata = meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, std::string("metadata is not valid JSON: ") + e.what());
    }
    const auto count = detail::get_le<std::uint32_t>(is, "tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        Tensor t;
        const auto name_len = detail::get_le<std::uint16_t>(is, "tensor name length");
        t.name = detail::get_bytes(is, name_len, "tensor name");
        const auto code = detail::get_le<std::uint8_t>(is, "dtype of '" + t.name + "'");
        if (code > 1) throw Error(Errc::io_error, "tensor '" + t.name + "': unknown dtype code " + std::to_string(code));
        t.dtype = static_cast<DType>(code);
        const auto ndim = detail::get_le<std::uint8_t>(is, "ndim of '" + t.name + "'");
        std::uint64_t numel = 1;
        for (std::uint8_t i = 0; i < ndim; ++i) {
            const auto d = detail::get_le<std::uint64_t>(is, "dims of '" + t.name + "'");
            if (d != 0 && numel > (std::uint64_t{1} << 31) / d) {
                throw Error(Errc::shape_mismatch, "tensor '" + t.name + "' is implausibly large");
            }
            numel *= d;
            t.dims.push_back(d);
        }
        const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
        const std::string raw = detail::get_bytes(is, static_cast<std::size_t>(numel) * width, "payload of '" + t.name + "'");
        const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
        t.data.resize(static_cast<std::size_t>(numel));
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint64_t u = 0;
            for (std::size_t b = 0; b < width; ++b) u |= static_cast<std::uint64_t>(bytes[i * width + b]) << (8 * b);
            t.data[i] = t.dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(u)))
                                              : std::bit_cast<double>(u);
        }
        c.add(std::move(t));
    }
    return c;
}

inline void save_container(const std::string& path, const TensorContainer& c) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
    write_container(os, c);
}

[[nodiscard]] inline TensorContainer load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(Errc::io_error, "cannot open '" + path + "'");
    return read_container(is);
}

}  // namespace hpl
