#include "alkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "alkd/ops.hpp"

namespace alkd {
namespace {

double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct KdShapes {
    std::size_t batch, length, dim;
};

KdShapes check_kd_inputs(const Tensor& student, std::span<const std::uint8_t> token_mask, const Tensor& teacher,
                         const char* op) {
    if (student.rank() != 3 || teacher.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected student [B,L,d] and teacher [B,d], got " +
                             shape_str(student.shape()) + " and " + shape_str(teacher.shape()));
    }
    const KdShapes s{student.dim(0), student.dim(1), student.dim(2)};
    if (teacher.dim(0) != s.batch || teacher.dim(1) != s.dim) {
        throw DimensionError(std::string(op) + ": teacher " + shape_str(teacher.shape()) + " does not match student " +
                             shape_str(student.shape()));
    }
    if (token_mask.size() != s.batch * s.length) {
        throw DimensionError(std::string(op) + ": token mask has " + std::to_string(token_mask.size()) +
                             " entries, expected " + std::to_string(s.batch * s.length));
    }
    require_finite(teacher.data(), std::string(op) + " teacher vectors");
    return s;
}

struct Kernel {
    KernelConfig cfg;
    double value(double x) const { return ipow(x + cfg.c, cfg.degree); }
    double slope(double x) const { return cfg.degree * ipow(x + cfg.c, cfg.degree - 1); }
};

Tensor nst_per_token(Tape& tape, const Tensor& student, std::span<const std::uint8_t> mask, const Tensor& teacher,
                     const Kernel& k, const KdShapes& sh) {
    const std::size_t d = sh.dim;
    const double inv_d2 = 1.0 / static_cast<double>(d * d);
    const auto s = student.data();
    const auto t = teacher.data();

    std::vector<double> teacher_term(sh.batch, 0.0);
    for (std::size_t b = 0; b < sh.batch; ++b) {
        const double* tb = t.data() + b * d;
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t jj = 0; jj < d; ++jj) teacher_term[b] += k.value(tb[j] * tb[jj]);
    }

    std::size_t n_valid = 0;
    double total = 0.0;
    for (std::size_t b = 0; b < sh.batch; ++b) {
        const double* tb = t.data() + b * d;
        for (std::size_t p = 0; p < sh.length; ++p) {
            if (!mask[b * sh.length + p]) continue;
            ++n_valid;
            const double* sp = s.data() + (b * sh.length + p) * d;
            double ss = 0.0, st = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t ii = 0; ii < d; ++ii) ss += k.value(sp[i] * sp[ii]);
                for (std::size_t j = 0; j < d; ++j) st += k.value(sp[i] * tb[j]);
            }
            total += (ss + teacher_term[b] - 2.0 * st) * inv_d2;
        }
    }
    if (n_valid == 0) throw ContractError("nst_loss: batch has no valid tokens");
    Tensor out = Tensor::scalar(total / static_cast<double>(n_valid));
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record("nst_loss", {student}, out, [student, teacher, out, k, sh, n_valid, inv_d2, m = std::move(m)]() mutable {
        if (!student.requires_grad()) return;
        const std::size_t d = sh.dim;
        const double scale = out.grad()[0] * inv_d2 / static_cast<double>(n_valid);
        auto g = student.grad();
        const auto s = student.data();
        const auto t = teacher.data();
        for (std::size_t b = 0; b < sh.batch; ++b) {
            const double* tb = t.data() + b * d;
            for (std::size_t p = 0; p < sh.length; ++p) {
                if (!m[b * sh.length + p]) continue;
                const std::size_t row = (b * sh.length + p) * d;
                const double* sp = s.data() + row;
                for (std::size_t i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (std::size_t ii = 0; ii < d; ++ii) acc += 2.0 * k.slope(sp[i] * sp[ii]) * sp[ii];
                    for (std::size_t j = 0; j < d; ++j) acc -= 2.0 * k.slope(sp[i] * tb[j]) * tb[j];
                    g[row + i] += scale * acc;
                }
            }
        }
    });
    return out;
}

Tensor nst_column(Tape& tape, const Tensor& student, std::span<const std::uint8_t> mask, const Tensor& teacher,
                  const Kernel& k, const KdShapes& sh) {
    const std::size_t d = sh.dim, L = sh.length;
    const double inv_d2 = 1.0 / static_cast<double>(d * d);
    const auto s = student.data();
    const auto t = teacher.data();

    std::size_t n_samples = 0;
    double total = 0.0;
    std::vector<double> gram(d * d), colsum(d);
    for (std::size_t b = 0; b < sh.batch; ++b) {
        const double* tb = t.data() + b * d;
        std::fill(gram.begin(), gram.end(), 0.0);
        std::fill(colsum.begin(), colsum.end(), 0.0);
        std::size_t n = 0;
        for (std::size_t p = 0; p < L; ++p) {
            if (!mask[b * L + p]) continue;
            ++n;
            const double* sp = s.data() + (b * L + p) * d;
            for (std::size_t i = 0; i < d; ++i) {
                colsum[i] += sp[i];
                for (std::size_t ii = 0; ii < d; ++ii) gram[i * d + ii] += sp[i] * sp[ii];
            }
        }
        if (n == 0) continue;
        ++n_samples;
        const double nn = static_cast<double>(n);
        double ss = 0.0, tt = 0.0, st = 0.0;
        for (std::size_t i = 0; i < d * d; ++i) ss += k.value(gram[i]);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t jj = 0; jj < d; ++jj) tt += k.value(nn * tb[j] * tb[jj]);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) st += k.value(colsum[i] * tb[j]);
        total += (ss + tt - 2.0 * st) * inv_d2;
    }
    if (n_samples == 0) throw ContractError("nst_loss: batch has no valid tokens");
    Tensor out = Tensor::scalar(total / static_cast<double>(n_samples));
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record("nst_loss", {student}, out, [student, teacher, out, k, sh, n_samples, inv_d2, m = std::move(m)]() mutable {
        if (!student.requires_grad()) return;
        const std::size_t d = sh.dim, L = sh.length;
        const double scale = out.grad()[0] * inv_d2 / static_cast<double>(n_samples);
        auto g = student.grad();
        const auto s = student.data();
        const auto t = teacher.data();
        std::vector<double> gram(d * d), colsum(d), gram_slope(d * d), cross(d);
        for (std::size_t b = 0; b < sh.batch; ++b) {
            const double* tb = t.data() + b * d;
            std::fill(gram.begin(), gram.end(), 0.0);
            std::fill(colsum.begin(), colsum.end(), 0.0);
            bool any = false;
            for (std::size_t p = 0; p < L; ++p) {
                if (!m[b * L + p]) continue;
                any = true;
                const double* sp = s.data() + (b * L + p) * d;
                for (std::size_t i = 0; i < d; ++i) {
                    colsum[i] += sp[i];
                    for (std::size_t ii = 0; ii < d; ++ii) gram[i * d + ii] += sp[i] * sp[ii];
                }
            }
            if (!any) continue;
            for (std::size_t i = 0; i < d * d; ++i) gram_slope[i] = k.slope(gram[i]);
            // d(cross term)/d s_{p,i} does not depend on p
            for (std::size_t i = 0; i < d; ++i) {
                cross[i] = 0.0;
                for (std::size_t j = 0; j < d; ++j) cross[i] += k.slope(colsum[i] * tb[j]) * tb[j];
            }
            for (std::size_t p = 0; p < L; ++p) {
                if (!m[b * L + p]) continue;
                const std::size_t row = (b * L + p) * d;
                const double* sp = s.data() + row;
                for (std::size_t i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (std::size_t ii = 0; ii < d; ++ii) acc += 2.0 * gram_slope[i * d + ii] * sp[ii];
                    acc -= 2.0 * cross[i];
                    g[row + i] += scale * acc;
                }
            }
        }
    });
    return out;
}

}  // namespace

NstMode parse_nst_mode(const std::string& name) {
    if (name == "per_token") return NstMode::per_token;
    if (name == "column") return NstMode::column;
    throw std::invalid_argument("unknown NST mode '" + name + "' (expected per_token or column)");
}

std::string to_string(NstMode mode) { return mode == NstMode::per_token ? "per_token" : "column"; }

double poly_kernel(std::span<const double> u, std::span<const double> v, const KernelConfig& kernel) {
    if (u.size() != v.size()) {
        throw DimensionError("poly_kernel: lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
    }
    if (kernel.degree < 1) throw std::invalid_argument("poly_kernel: degree must be a positive integer");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
    return ipow(dot + kernel.c, kernel.degree);
}

double negative_ratio(std::size_t negatives, std::size_t dataset_size) {
    if (dataset_size == 0) throw std::invalid_argument("CRD dataset size M must be positive");
    if (negatives > dataset_size) {
        throw std::invalid_argument("CRD needs M >= N (M=" + std::to_string(dataset_size) +
                                    ", N=" + std::to_string(negatives) + ")");
    }
    return static_cast<double>(std::max<std::size_t>(negatives, 1)) / static_cast<double>(dataset_size);
}

CriticValue crd_critic(std::span<const double> s, std::span<const double> t, double tau, double ratio) {
    if (s.size() != t.size()) throw DimensionError("crd_critic: vector lengths differ");
    if (!(tau > 0.0)) throw std::invalid_argument("crd_critic: tau must be positive");
    if (!(ratio > 0.0)) throw std::invalid_argument("crd_critic: N/M must be positive");
    double dot = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * t[i];
    const double z = dot / tau;
    const double log_r = std::log(ratio);
    CriticValue v{};
    v.log_phi = -softplus(log_r - z);
    v.log_one_minus_phi = -softplus(z - log_r);
    v.phi = std::exp(v.log_phi);
    return v;
}

Tensor nst_loss(Tape& tape, const Tensor& student, std::span<const std::uint8_t> token_mask, const Tensor& teacher,
                const KernelConfig& kernel, NstMode mode) {
    const auto sh = check_kd_inputs(student, token_mask, teacher, "nst_loss");
    if (kernel.degree < 1) throw std::invalid_argument("nst_loss: kernel degree must be a positive integer");
    const Kernel k{kernel};
    return mode == NstMode::per_token ? nst_per_token(tape, student, token_mask, teacher, k, sh)
                                      : nst_column(tape, student, token_mask, teacher, k, sh);
}

Tensor crd_loss(Tape& tape, const Tensor& student, std::span<const std::uint8_t> token_mask, const Tensor& teacher,
                const CrdConfig& config) {
    const auto sh = check_kd_inputs(student, token_mask, teacher, "crd_loss");
    if (sh.batch == 0) throw ContractError("crd_loss: empty batch");
    if (!(config.tau > 0.0)) throw std::invalid_argument("crd_loss: tau must be positive");
    const std::size_t d = sh.dim, L = sh.length, B = sh.batch;
    const double log_r = std::log(negative_ratio(B - 1, config.dataset_size));
    const double inv_tau = 1.0 / config.tau;
    const auto s = student.data();
    const auto t = teacher.data();

    std::size_t n_valid = 0;
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < L; ++p) {
            if (!token_mask[b * L + p]) continue;
            ++n_valid;
            const double* sp = s.data() + (b * L + p) * d;
            for (std::size_t c = 0; c < B; ++c) {
                const double* tc = t.data() + c * d;
                double dot = 0.0;
                for (std::size_t i = 0; i < d; ++i) dot += sp[i] * tc[i];
                const double z = dot * inv_tau;
                total += c == b ? softplus(log_r - z) : softplus(z - log_r);
            }
        }
    }
    if (n_valid == 0) throw ContractError("crd_loss: batch has no valid tokens");
    Tensor out = Tensor::scalar(total / static_cast<double>(n_valid));
    std::vector<std::uint8_t> m(token_mask.begin(), token_mask.end());
    tape.record("crd_loss", {student}, out,
                [student, teacher, out, sh, n_valid, inv_tau, log_r, m = std::move(m)]() mutable {
                    if (!student.requires_grad()) return;
                    const std::size_t d = sh.dim, L = sh.length, B = sh.batch;
                    const double scale = out.grad()[0] * inv_tau / static_cast<double>(n_valid);
                    auto g = student.grad();
                    const auto s = student.data();
                    const auto t = teacher.data();
                    for (std::size_t b = 0; b < B; ++b) {
                        for (std::size_t p = 0; p < L; ++p) {
                            if (!m[b * L + p]) continue;
                            const std::size_t row = (b * L + p) * d;
                            const double* sp = s.data() + row;
                            for (std::size_t c = 0; c < B; ++c) {
                                const double* tc = t.data() + c * d;
                                double dot = 0.0;
                                for (std::size_t i = 0; i < d; ++i) dot += sp[i] * tc[i];
                                const double z = dot * inv_tau;
                                // d/dz of softplus(log_r - z) = -(1 - φ); of softplus(z - log_r) = φ
                                const double w = c == b ? -sigmoid(log_r - z) : sigmoid(z - log_r);
                                for (std::size_t i = 0; i < d; ++i) g[row + i] += scale * w * tc[i];
                            }
                        }
                    }
                });
    return out;
}

Tensor mlm_loss(Tape& tape, const Tensor& logits, std::span<const std::int32_t> targets,
                std::span<const std::uint8_t> mlm_mask) {
    if (logits.rank() < 2) throw DimensionError("mlm_loss: logits must be [..., V], got " + shape_str(logits.shape()));
    const std::size_t v = logits.shape().back();
    const std::size_t rows = logits.size() / v;
    if (targets.size() != rows || mlm_mask.size() != rows) {
        throw DimensionError("mlm_loss: " + std::to_string(rows) + " positions but " + std::to_string(targets.size()) +
                             " targets and " + std::to_string(mlm_mask.size()) + " mask entries");
    }
    std::vector<std::size_t> masked;
    std::vector<std::int32_t> masked_targets;
    for (std::size_t i = 0; i < rows; ++i) {
        if (mlm_mask[i]) {
            masked.push_back(i);
            masked_targets.push_back(targets[i]);
        }
    }
    if (masked.empty()) throw ContractError("mlm_loss: no masked positions in batch");
    // Only masked rows enter the softmax, so unmasked logits cannot affect the loss.
    Tensor flat = logits.rank() == 2 ? logits : ops::reshape(tape, logits, {rows, v});
    Tensor logp = ops::log_softmax(tape, ops::gather_rows(tape, flat, masked));
    const std::vector<std::uint8_t> all(masked.size(), 1);
    return ops::masked_nll(tape, logp, masked_targets, all);
}

Tensor weighted_total(Tape& tape, const Tensor& kd, const Tensor& mlm, double gamma) {
    return ops::add(tape, ops::scale(tape, kd, gamma), mlm);
}

LossBreakdown total_loss(double kd, double mlm, double gamma) {
    if (!std::isfinite(kd) || !std::isfinite(mlm) || !std::isfinite(gamma)) {
        throw NumericError("loss diverged: kd=" + std::to_string(kd) + " mlm=" + std::to_string(mlm));
    }
    LossBreakdown out;
    out.kd = kd;
    out.mlm = mlm;
    out.gamma = gamma;
    out.total = to_storage(to_storage(gamma * kd) + mlm);
    return out;
}

}  // namespace alkd
