#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alkd::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
   public:
    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

   private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; throws Error on truncation with the
/// byte offset of the failed read.
template <class Error>
class ByteReader {
   public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* format) : bytes_(bytes), format_(format) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

   private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw Error(std::string("truncated ") + format_ + ": need " + std::to_string(n) + " bytes for " + what +
                        " at byte offset " + std::to_string(pos_) + ", file has " + std::to_string(bytes_.size()) +
                        " bytes");
        }
    }
    std::span<const std::uint8_t> bytes_;
    const char* format_;
    std::size_t pos_ = 0;
};

}  // namespace alkd::detail
