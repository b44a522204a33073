#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "alkd/tensor.hpp"

namespace alkd {

/// k(u, v) = (uᵀv + c)^degree
struct KernelConfig {
    double c = 0.0;
    int degree = 2;
};

/// How the MMD sets are formed from a student sequence and one pooled
/// teacher vector.
///  per_token: for every valid token, the d scalar coordinates of the token
///             state against the d coordinates of the teacher vector; the
///             per-token MMD² values are averaged over all valid tokens.
///  column:    per sample, the d columns (one length-n activation pattern per
///             neuron over the n valid tokens) against the teacher coordinates
///             broadcast to constant length-n columns; averaged over samples.
enum class NstMode { per_token, column };

NstMode parse_nst_mode(const std::string& name);
std::string to_string(NstMode mode);

struct CrdConfig {
    double tau = 0.01;
    /// M, the number of records in the pretraining set.
    std::size_t dataset_size = 0;
};

struct CriticValue {
    double phi;
    double log_phi;
    double log_one_minus_phi;
};

struct LossBreakdown {
    double mlm = 0.0;
    double kd = 0.0;
    double total = 0.0;
    double gamma = 1.0;
    std::size_t n_masked = 0;
    std::size_t n_valid_tokens = 0;
};

double poly_kernel(std::span<const double> u, std::span<const double> v, const KernelConfig& kernel);

/// N/M with the ratio floored at 1/M when there are no negatives.
double negative_ratio(std::size_t negatives, std::size_t dataset_size);

/// φ = e^{sᵀt/τ} / (e^{sᵀt/τ} + N/M), evaluated in log space.
CriticValue crd_critic(std::span<const double> s, std::span<const double> t, double tau, double ratio);

/// Squared MMD with the polynomial kernel between the student states
/// [B, L, d] at positions where token_mask is set and the teacher vectors
/// [B, d]. The teacher receives no gradient.
Tensor nst_loss(Tape& tape, const Tensor& student, std::span<const std::uint8_t> token_mask, const Tensor& teacher,
                const KernelConfig& kernel = {}, NstMode mode = NstMode::per_token);

/// Contrastive loss with one positive (own teacher) and B-1 in-batch
/// negatives per valid token: -log φ(pos) - Σ log(1 - φ(neg)), averaged over
/// valid tokens.
Tensor crd_loss(Tape& tape, const Tensor& student, std::span<const std::uint8_t> token_mask, const Tensor& teacher,
                const CrdConfig& config);

/// Mean negative log-likelihood of targets over masked positions.
/// logits: [B, L, V] (or [N, V]).
Tensor mlm_loss(Tape& tape, const Tensor& logits, std::span<const std::int32_t> targets,
                std::span<const std::uint8_t> mlm_mask);

/// gamma·kd + mlm on the tape.
Tensor weighted_total(Tape& tape, const Tensor& kd, const Tensor& mlm, double gamma);

/// Scalar bookkeeping of the same sum, rounded like the tensor path.
LossBreakdown total_loss(double kd, double mlm, double gamma);

}  // namespace alkd
