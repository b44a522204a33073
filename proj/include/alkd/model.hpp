#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alkd/rng.hpp"
#include "alkd/tensor.hpp"
#include "alkd/text.hpp"

namespace alkd {

class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Student encoder hyperparameters. Defaults are the desk-scale setting; the
/// full-size student is n_layers=12, d_model=768, n_heads=12, d_ff=3072.
struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t vocab_size = 0;
    std::size_t max_len = kDefaultMaxLen;
    double dropout_rate = 0.1;
    std::size_t teacher_dim = 768;
    bool use_projection = true;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-12;

struct EncoderLayer {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
    bool weight_decay = true;
};

/// Pre-norm transformer encoder with learned positions, a weight-tied MLM
/// head and an optional projection into the teacher space.
struct StudentModel {
    ModelConfig config;
    Tensor token_embedding;     // [V, d_model]
    Tensor position_embedding;  // [max_len, d_model]
    std::vector<EncoderLayer> layers;
    Tensor final_ln_gain, final_ln_bias;
    Tensor mlm_bias;    // [V]
    Tensor projection;  // [d_model, teacher_dim], undefined unless use_projection

    /// Stable, named view of every trainable tensor (shared handles).
    std::vector<NamedParameter> parameters() const;
    void zero_grad() const;
    StudentModel clone() const;
};

/// Truncated normal (σ = kInitStd, cut at 2σ) weights, zero biases, unit
/// layer-norm gains. Deterministic for a given seed.
StudentModel init_model(const ModelConfig& config, std::uint64_t seed);

/// Fills `t` with N(0, std²) samples redrawn until |x| <= 2·std.
void truncated_normal_fill(Tensor& t, double std, Rng& rng);

struct EncodeOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;  // required when train && dropout_rate > 0
};

/// Hidden states [B, L, d_model]. [PAD] keys are excluded from every
/// query's attention.
Tensor encode(Tape& tape, const StudentModel& model, const Batch& batch, const EncodeOptions& options = {});

/// Tied-embedding logits [B, L, V].
Tensor mlm_logits(Tape& tape, const StudentModel& model, const Tensor& hidden);

/// Teacher-space states [B, L, teacher_dim]: the learned projection when
/// enabled, otherwise the identity (requires d_model == teacher_dim).
Tensor project(Tape& tape, const StudentModel& model, const Tensor& hidden);

/// [CLS] rows of hidden states: [B, d_model].
Tensor cls_states(Tape& tape, const Tensor& hidden);

}  // namespace alkd
