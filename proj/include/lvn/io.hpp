#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lvn/network.hpp"

namespace lvn {

/// Raised for malformed or truncated files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian append-only byte buffer.
class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.append(s); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    const std::string& str() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

/// Bounds-checked little-endian reader; every overrun throws FormatError.
class ByteReader {
public:
    ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t remaining() const { return data_.size() - pos_; }
    void expect_end() const {
        if (remaining() != 0)
            throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
    [[noreturn]] void fail(const std::string& why) const { throw FormatError(what_ + ": " + why); }

private:
    void need(std::size_t n) const {
        if (remaining() < n)
            throw FormatError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
    }
    std::uint64_t le(int n) {
        auto s = bytes(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }

    std::string_view data_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Model file: "LVNM", u16 version, input shape and class count, the layer
// table, then every parameter tensor as little-endian f32 in layer order.
inline constexpr std::uint16_t kModelVersion = 1;

std::string encode_model(const Network& net);
Network decode_model(std::string_view bytes);
void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

// Binary PPM (P6) / PGM (P5), maxval 255. Byte v maps to v / 255.
std::string encode_ppm(const Image& image);
Image decode_ppm(std::string_view bytes);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Values are rounded and clamped to bytes: round(255 * v).
std::string encode_pgm(std::size_t height, std::size_t width, std::span<const double> values);

struct GrayImage {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> pixels;
};
GrayImage decode_pgm(std::string_view bytes);

/// Converts a real in [0, 1] to a byte with round-half-up.
std::uint8_t to_byte(double v);

}  // namespace lvn
