#include "alkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace alkd::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

/// Runs body(begin, end) over [0, n) split across numerics().threads workers.
/// Each index is handled by exactly one worker, so per-index results do not
/// depend on the thread count.
template <class Body>
void parallel_rows(std::size_t n, std::size_t work_per_row, Body body) {
    const auto threads = static_cast<std::size_t>(std::max(1, numerics().threads));
    if (threads == 1 || n < 2 || n * work_per_row < (1u << 16)) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t workers = std::min(threads, n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin < end) pool.emplace_back([=] { body(begin, end); });
    }
    body(std::size_t{0}, std::min(n, chunk));
}

// C[m,n] += op(A)[m,k] · op(B)[k,n]. A is [k,m] when ta, B is [n,k] when tb.
// Every C entry sums over p in increasing order.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B,
          double* C) {
    if (!ta && !tb) {
        parallel_rows(m, n * k, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
                double* c = C + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double a = A[i * k + p];
                    const double* b = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
                }
            }
        });
    } else if (!ta && tb) {
        parallel_rows(m, n * k, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
                const double* a = A + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* b = B + j * k;
                    double acc = 0.0;
                    for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
                    C[i * n + j] += acc;
                }
            }
        });
    } else if (ta && !tb) {
        parallel_rows(m, n * k, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
                double* c = C + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double a = A[p * m + i];
                    const double* b = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
                }
            }
        });
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += A[p * m + i] * B[j * k + p];
                C[i * n + j] += acc;
            }
        }
    }
}

Tensor batched_matmul(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b, const char* op) {
    require_rank(a, 3, op);
    require_rank(b, 3, op);
    const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    if (b.dim(0) != g || bk != k) {
        throw DimensionError(std::string(op) + ": cannot multiply " + shape_str(a.shape()) + " by " +
                             shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({g, m, n});
    for (std::size_t s = 0; s < g; ++s) {
        gemm(false, transpose_b, m, n, k, a.data().data() + s * m * k, b.data().data() + s * k * n,
             out.data().data() + s * m * n);
    }
    tape.record(op, {a, b}, out, [a, b, out, g, m, n, k, transpose_b]() mutable {
        const double* go = out.grad().data();
        if (a.requires_grad()) {
            double* ga = a.grad().data();
            for (std::size_t s = 0; s < g; ++s) {
                // dA = G · op(B)ᵀ
                gemm(false, !transpose_b, m, k, n, go + s * m * n, b.data().data() + s * k * n, ga + s * m * k);
            }
        }
        if (b.requires_grad()) {
            double* gb = b.grad().data();
            for (std::size_t s = 0; s < g; ++s) {
                if (transpose_b) {
                    // B is [n,k]: dB = Gᵀ · A
                    gemm(true, false, n, k, m, go + s * m * n, a.data().data() + s * m * k, gb + s * k * n);
                } else {
                    // dB = Aᵀ · G
                    gemm(true, false, k, n, m, a.data().data() + s * m * k, go + s * m * n, gb + s * k * n);
                }
            }
        }
    });
    return out;
}

template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
    Tensor out = Tensor::zeros(x.shape());
    auto xs = x.data();
    auto os = out.data();
    for (std::size_t i = 0; i < xs.size(); ++i) os[i] = fwd(xs[i]);
    tape.record(op, {x}, out, [x, out, deriv]() mutable {
        if (!x.requires_grad()) return;
        auto gx = x.grad();
        auto go = out.grad();
        auto xs = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * deriv(xs[i]);
    });
    return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner extents disagree, " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data().data());
    tape.record("matmul", {a, b}, out, [a, b, out, m, n, k]() mutable {
        const double* go = out.grad().data();
        if (a.requires_grad()) gemm(false, true, m, k, n, go, b.data().data(), a.grad().data());
        if (b.requires_grad()) gemm(true, false, k, n, m, a.data().data(), go, b.grad().data());
    });
    return out;
}

Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_bt");
    require_rank(b, 2, "matmul_bt");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("matmul_bt: inner extents disagree, " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()) + "ᵀ");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out = Tensor::zeros({m, n});
    gemm(false, true, m, n, k, a.data().data(), b.data().data(), out.data().data());
    tape.record("matmul_bt", {a, b}, out, [a, b, out, m, n, k]() mutable {
        const double* go = out.grad().data();
        if (a.requires_grad()) gemm(false, false, m, k, n, go, b.data().data(), a.grad().data());
        if (b.requires_grad()) gemm(true, false, n, k, m, go, a.data().data(), b.grad().data());
    });
    return out;
}

Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b) { return batched_matmul(tape, a, b, false, "bmm"); }
Tensor bmm_bt(Tape& tape, const Tensor& a, const Tensor& b) { return batched_matmul(tape, a, b, true, "bmm_bt"); }

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    tape.record("add", {a, b}, out, [a, b, out]() mutable {
        auto go = out.grad();
        for (const Tensor* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto g = t->grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
        }
    });
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    tape.record("sub", {a, b}, out, [a, b, out]() mutable {
        auto go = out.grad();
        if (a.requires_grad()) {
            auto g = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
        }
        if (b.requires_grad()) {
            auto g = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
        }
    });
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    tape.record("mul", {a, b}, out, [a, b, out]() mutable {
        auto go = out.grad();
        if (a.requires_grad()) {
            auto g = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto g = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * a.data()[i];
        }
    });
    return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_rank(bias, 1, "add_bias");
    if (x.rank() == 0 || x.shape().back() != bias.dim(0)) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    }
    const std::size_t d = bias.dim(0);
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] + bias.data()[i % d];
    tape.record("add_bias", {x, bias}, out, [x, bias, out, d]() mutable {
        auto go = out.grad();
        if (x.requires_grad()) {
            auto g = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
        }
        if (bias.requires_grad()) {
            auto g = bias.grad();
            for (std::size_t i = 0; i < go.size(); ++i) g[i % d] += go[i];
        }
    });
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
    return unary(
        tape, x, "scale", [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return unary(
        tape, x, "gelu",
        [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + kGeluCubic * v * v * v))); },
        [](double v) {
            const double t = std::tanh(k * (v + kGeluCubic * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * kGeluCubic * v * v);
        });
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0,1)");
    if (rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    const double inv = 1.0 / (1.0 - rate);
    std::vector<double> factor(x.size());
    for (auto& f : factor) f = keep(rng) ? inv : 0.0;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] * factor[i];
    tape.record("dropout", {x}, out, [x, out, factor = std::move(factor)]() mutable {
        if (!x.requires_grad()) return;
        auto g = x.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * factor[i];
    });
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    tape.record("sum", {x}, out, [x, out]() mutable {
        if (!x.requires_grad()) return;
        const double go = out.grad()[0];
        for (auto& g : x.grad()) g += go;
    });
    return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
    if (x.size() == 0) throw DimensionError("mean of empty tensor");
    return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: last extent must be nonzero");
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    const std::size_t d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
    }
    const std::size_t rows = x.size() / d;
    std::vector<double> xhat(x.size());
    std::vector<double> rstd(rows);
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            xhat[r * d + i] = (xr[i] - mu) * rstd[r];
            out.data()[r * d + i] = xhat[r * d + i] * gain.data()[i] + bias.data()[i];
        }
    }
    tape.record("layer_norm", {x, gain, bias}, out,
                [x, gain, bias, out, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
                    auto go = out.grad();
                    if (gain.requires_grad() || bias.requires_grad()) {
                        auto gg = gain.grad();
                        auto gb = bias.grad();
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t i = 0; i < d; ++i) {
                                gg[i] += go[r * d + i] * xhat[r * d + i];
                                gb[i] += go[r * d + i];
                            }
                        }
                    }
                    if (!x.requires_grad()) return;
                    auto gx = x.grad();
                    std::vector<double> dxhat(d);
                    for (std::size_t r = 0; r < rows; ++r) {
                        double mean_d = 0.0, mean_dx = 0.0;
                        for (std::size_t i = 0; i < d; ++i) {
                            dxhat[i] = go[r * d + i] * gain.data()[i];
                            mean_d += dxhat[i];
                            mean_dx += dxhat[i] * xhat[r * d + i];
                        }
                        mean_d /= static_cast<double>(d);
                        mean_dx /= static_cast<double>(d);
                        for (std::size_t i = 0; i < d; ++i) {
                            gx[r * d + i] += rstd[r] * (dxhat[i] - mean_d - xhat[r * d + i] * mean_dx);
                        }
                    }
                });
    return out;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
    if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("log_softmax: last extent must be >= 1");
    const std::size_t v = x.shape().back();
    const std::size_t rows = x.size() / v;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * v;
        double* orow = out.data().data() + r * v;
        const double mx = *std::max_element(xr, xr + v);
        double z = 0.0;
        for (std::size_t i = 0; i < v; ++i) z += std::exp(xr[i] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t i = 0; i < v; ++i) orow[i] = xr[i] - lse;
    }
    tape.record("log_softmax", {x}, out, [x, out, v, rows]() mutable {
        if (!x.requires_grad()) return;
        auto gx = x.grad();
        auto go = out.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t i = 0; i < v; ++i) s += go[r * v + i];
            for (std::size_t i = 0; i < v; ++i) gx[r * v + i] += go[r * v + i] - std::exp(out.data()[r * v + i]) * s;
        }
    });
    return out;
}

Tensor masked_softmax(Tape& tape, const Tensor& scores, std::span<const std::uint8_t> key_valid, std::size_t heads) {
    require_rank(scores, 3, "masked_softmax");
    const std::size_t groups = scores.dim(0), len = scores.dim(1);
    if (scores.dim(2) != len || heads == 0 || groups % heads != 0 || key_valid.size() != (groups / heads) * len) {
        throw DimensionError("masked_softmax: scores " + shape_str(scores.shape()) + " inconsistent with mask of " +
                             std::to_string(key_valid.size()) + " entries and " + std::to_string(heads) + " heads");
    }
    Tensor out = Tensor::zeros(scores.shape());
    for (std::size_t g = 0; g < groups; ++g) {
        const std::uint8_t* valid = key_valid.data() + (g / heads) * len;
        for (std::size_t i = 0; i < len; ++i) {
            const double* s = scores.data().data() + (g * len + i) * len;
            double* p = out.data().data() + (g * len + i) * len;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < len; ++j) {
                if (valid[j]) mx = std::max(mx, s[j]);
            }
            if (!std::isfinite(mx)) throw ContractError("masked_softmax: row has no valid keys");
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                p[j] = valid[j] ? std::exp(s[j] - mx) : 0.0;
                z += p[j];
            }
            for (std::size_t j = 0; j < len; ++j) p[j] /= z;
        }
    }
    tape.record("masked_softmax", {scores}, out, [scores, out, groups, len]() mutable {
        if (!scores.requires_grad()) return;
        auto gs = scores.grad();
        auto go = out.grad();
        auto p = out.data();
        for (std::size_t row = 0; row < groups * len; ++row) {
            const std::size_t o = row * len;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += go[o + j] * p[o + j];
            for (std::size_t j = 0; j < len; ++j) gs[o + j] += p[o + j] * (go[o + j] - dot);
        }
    });
    return out;
}

Tensor masked_nll(Tape& tape, const Tensor& logp, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask) {
    require_rank(logp, 2, "masked_nll");
    const std::size_t n = logp.dim(0), v = logp.dim(1);
    if (targets.size() != n || mask.size() != n) {
        throw DimensionError("masked_nll: " + std::to_string(n) + " rows but " + std::to_string(targets.size()) +
                             " targets and " + std::to_string(mask.size()) + " mask entries");
    }
    std::size_t count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
            throw DimensionError("masked_nll: target id " + std::to_string(targets[i]) + " outside [0, " +
                                 std::to_string(v) + ")");
        }
        acc -= logp.data()[i * v + static_cast<std::size_t>(targets[i])];
        ++count;
    }
    if (count == 0) throw ContractError("masked_nll: no masked positions");
    Tensor out = Tensor::scalar(acc / static_cast<double>(count));
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    tape.record("masked_nll", {logp}, out, [logp, out, v, count, tgt = std::move(tgt), msk = std::move(msk)]() mutable {
        if (!logp.requires_grad()) return;
        const double go = out.grad()[0] / static_cast<double>(count);
        auto g = logp.grad();
        for (std::size_t i = 0; i < msk.size(); ++i) {
            if (msk[i]) g[i * v + static_cast<std::size_t>(tgt[i])] -= go;
        }
    });
    return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids) {
    require_rank(table, 2, "embedding");
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    Tensor out = Tensor::zeros({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(vocab) +
                                 ")");
        }
        std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data().data() + i * d);
    }
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record("embedding", {table}, out, [table, out, d, idv = std::move(idv)]() mutable {
        if (!table.requires_grad()) return;
        auto g = table.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < idv.size(); ++i) {
            const std::size_t row = static_cast<std::size_t>(idv[i]) * d;
            for (std::size_t j = 0; j < d; ++j) g[row + j] += go[i * d + j];
        }
    });
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
    require_rank(x, 2, "gather_rows");
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n) throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
        std::copy_n(x.data().data() + rows[i] * d, d, out.data().data() + i * d);
    }
    std::vector<std::size_t> rv(rows.begin(), rows.end());
    tape.record("gather_rows", {x}, out, [x, out, d, rv = std::move(rv)]() mutable {
        if (!x.requires_grad()) return;
        auto g = x.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < rv.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) g[rv[i] * d + j] += go[i * d + j];
        }
    });
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    tape.record("reshape", {x}, out, [x, out]() mutable {
        if (!x.requires_grad()) return;
        auto g = x.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
    return out;
}

Tensor swap_axes_12(Tape& tape, const Tensor& x) {
    require_rank(x, 4, "swap_axes_12");
    const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
    Tensor out = Tensor::zeros({a, c, b, d});
    auto src_index = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * b + j) * c + k) * d; };
    auto dst_index = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * c + k) * b + j) * d; };
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k)
                std::copy_n(x.data().data() + src_index(i, j, k), d, out.data().data() + dst_index(i, j, k));
    tape.record("swap_axes_12", {x}, out, [x, out, a, b, c, d, src_index, dst_index]() mutable {
        if (!x.requires_grad()) return;
        auto g = x.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t e = 0; e < d; ++e) g[src_index(i, j, k) + e] += go[dst_index(i, j, k) + e];
    });
    return out;
}

}  // namespace alkd::ops
