#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alkd/rng.hpp"

namespace alkd {

/// Malformed, truncated, or invalid ALKD store.
class StoreError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// One pooled speech-encoder vector and its paired transcript.
struct TeacherEmbedding {
    std::string sample_id;
    std::string transcript;
    std::vector<float> vector;

    bool operator==(const TeacherEmbedding&) const = default;
};

/// ALKD v1, little-endian:
///   "ALKD" | u16 version | u32 dim | u64 count
///   per record: u16 id_len | id | u32 text_len | text | dim × f32
struct EmbeddingStore {
    static constexpr char kMagic[4] = {'A', 'L', 'K', 'D'};
    static constexpr std::uint16_t kVersion = 1;

    std::uint32_t dim = 0;
    std::vector<TeacherEmbedding> records;

    std::size_t count() const { return records.size(); }
    bool operator==(const EmbeddingStore&) const = default;
};

/// Mean over the frame axis of a row-major [frames × dim] matrix.
std::vector<double> average_pool(std::span<const double> frames, std::size_t dim);

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(std::span<const std::uint8_t> bytes);

/// Validates uniform dimension, unique ids, and finite values before writing.
void write_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore read_store(const std::string& path);

/// Deterministic unit-norm anchor for a latent class.
std::vector<double> class_anchor(std::uint32_t latent_class, std::size_t dim);

/// Class anchor plus N(0, noise_scale²) noise per coordinate.
std::vector<float> synth_teacher(std::uint32_t latent_class, std::size_t dim, double noise_scale, Rng& rng);

}  // namespace alkd
