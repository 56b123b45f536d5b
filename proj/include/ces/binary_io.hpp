#pragma once

// Little-endian primitives for the binary file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ces/errors.hpp"
#include "ces/numerics.hpp"

namespace ces::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
public:
    void bytes(std::string_view data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

    void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) {
            buffer_.push_back(static_cast<char>((v >> shift) & 0xFFu));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    /// Narrows to f32; values outside the f32 range are rejected.
    void f32_from(double v) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) {
            throw NumericError("value not representable as f32");
        }
        f32(f);
    }

    /// (u32 rows, u32 cols) followed by row-major f32 payload.
    template <typename Derived>
    void matrix(const Eigen::DenseBase<Derived>& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                f32_from(m(r, c));
            }
        }
    }

    const std::vector<char>& data() const { return buffer_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + path);
        }
        out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!out) {
            throw IoError("write failed: " + path);
        }
    }

private:
    std::vector<char> buffer_;
};

class Reader {
public:
    explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

    static Reader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot open for reading: " + path);
        }
        std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return Reader(std::move(data));
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    void expect_magic(std::string_view magic) {
        if (remaining() < magic.size()) {
            throw FormatError("truncated header");
        }
        if (std::string_view(data_.data() + pos_, magic.size()) != magic) {
            throw FormatError("bad magic: expected " + std::string(magic));
        }
        pos_ += magic.size();
    }

    std::uint8_t u8() {
        need(1, "truncated header");
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32(const char* what = "truncated header") {
        need(4, what);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
        }
        pos_ += 4;
        return v;
    }

    float f32(const char* what = "truncated payload") { return std::bit_cast<float>(u32(what)); }

    /// Reads an f32 and widens it; NaN or infinity is a format error.
    double finite_f32(const char* what = "truncated payload") {
        const float v = f32(what);
        if (!std::isfinite(v)) {
            throw FormatError("non-finite value in file");
        }
        return static_cast<double>(v);
    }

    Matrix matrix(const char* what = "truncated payload") {
        const std::uint32_t rows = u32(what);
        const std::uint32_t cols = u32(what);
        return payload(rows, cols, what);
    }

    Matrix payload(std::uint32_t rows, std::uint32_t cols, const char* what = "truncated payload") {
        const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
        if (count * 4 > remaining()) {
            throw FormatError(what);
        }
        Matrix m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                m(r, c) = finite_f32(what);
            }
        }
        return m;
    }

    void expect_end() const {
        if (remaining() != 0) {
            throw FormatError("trailing bytes after payload");
        }
    }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(what);
        }
    }

    std::vector<char> data_;
    std::size_t pos_ = 0;
};

}  // namespace ces::io
