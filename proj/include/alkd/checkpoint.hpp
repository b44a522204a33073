#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alkd/model.hpp"
#include "alkd/optimizer.hpp"
#include "alkd/text.hpp"

namespace alkd {

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Everything needed to resume pretraining or start fine-tuning.
///
/// ALKC v1, little-endian:
///   "ALKC" | u16 version
///   config: u32 n_layers, d_model, n_heads, d_ff, vocab_size, max_len,
///           teacher_dim | u8 use_projection | f64 dropout_rate
///   u64 step
///   u32 vocab count, then (u16 len | bytes) per token
///   u32 metadata length | metadata (JSON text)
///   u32 tensor count, then per tensor:
///       u16 name len | name | u8 rank | u32 extents[rank] | f32 data
///   u8 has_optimizer, then if set:
///       u64 step | f64 beta1, beta2, eps | u32 count, then per tensor:
///       u16 name len | name | u64 numel | f32 m[numel] | f32 v[numel]
struct Checkpoint {
    static constexpr char kMagic[4] = {'A', 'L', 'K', 'C'};
    static constexpr std::uint16_t kVersion = 1;

    StudentModel model;
    Vocab vocab;
    std::uint64_t step = 0;
    std::optional<OptimizerState> optimizer;
    /// Tensors outside the encoder (e.g. fine-tuning heads), stored after the
    /// model parameters.
    std::vector<NamedParameter> extra;
    std::string metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

/// When `expected` is given, every stored tensor must have the shape that
/// configuration implies; a mismatch raises CheckpointError naming the tensor.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig* expected = nullptr);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

}  // namespace alkd
