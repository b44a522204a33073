#pragma once

// Independent reference implementations used by unit and acceptance tests.
// They share no code with the library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alkd/tensor.hpp"

namespace oracle {

inline alkd::Numerics f64() {
    alkd::Numerics n;
    n.precision = alkd::Precision::f64;
    n.check_finite = true;
    return n;
}

struct GradReport {
    double max_rel_err = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// Central differences of a scalar function against the tape gradient of
/// every element of `leaves`. Relative error uses max(|a|, |n|, floor).
inline GradReport grad_check(const std::function<alkd::Tensor(alkd::Tape&)>& f,
                             const std::vector<std::pair<std::string, alkd::Tensor>>& leaves, double h = 1e-5,
                             double floor = 1e-6) {
    for (const auto& [name, t] : leaves) t.zero_grad();
    double f0 = 0.0;
    {
        alkd::Tape tape;
        alkd::Tensor y = f(tape);
        f0 = y.item();
        tape.backward(y);
    }
    // central differences lose about eps·|f|/h to cancellation, so the floor
    // grows with the loss value
    const double denom_floor = floor * std::max(1.0, std::abs(f0));
    GradReport rep;
    for (const auto& [name, t] : leaves) {
        auto data = t.data();
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double x = data[i];
            data[i] = x + h;
            alkd::Tape t1;
            const double fp = f(t1).item();
            data[i] = x - h;
            alkd::Tape t2;
            const double fm = f(t2).item();
            data[i] = x;
            const double numeric = (fp - fm) / (2.0 * h);
            const double rel =
                std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

inline double poly(double x, double c, int degree) { return std::pow(x + c, degree); }

/// Squared MMD between two sets of vectors with k(u,v) = (uᵀv + c)^deg,
/// written as the literal double sums.
inline double mmd2(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, double c,
                   int degree) {
    auto k = [&](const std::vector<double>& u, const std::vector<double>& v) {
        double dot = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
        return poly(dot, c, degree);
    };
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (const auto& x : a)
        for (const auto& y : a) saa += k(x, y);
    for (const auto& x : b)
        for (const auto& y : b) sbb += k(x, y);
    for (const auto& x : a)
        for (const auto& y : b) sab += k(x, y);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    return saa / (na * na) + sbb / (nb * nb) - 2.0 * sab / (na * nb);
}

/// Per-token NST for one token: coordinates of s and t as one-dimensional sets.
inline double nst_token(std::span<const double> s, std::span<const double> t, double c = 0.0, int degree = 2) {
    std::vector<std::vector<double>> a, b;
    for (double v : s) a.push_back({v});
    for (double v : t) b.push_back({v});
    return mmd2(a, b, c, degree);
}

/// (‖s‖² − ‖t‖²)² / d²
inline double nst_closed_form(std::span<const double> s, std::span<const double> t) {
    double ns = 0.0, nt = 0.0;
    for (double v : s) ns += v * v;
    for (double v : t) nt += v * v;
    const double d = static_cast<double>(s.size());
    return (ns - nt) * (ns - nt) / (d * d);
}

/// Column reading for one sample: student columns over n tokens vs teacher
/// coordinates broadcast to constant columns.
inline double nst_column_sample(const std::vector<std::vector<double>>& tokens, std::span<const double> t,
                                double c = 0.0, int degree = 2) {
    const std::size_t n = tokens.size(), d = t.size();
    std::vector<std::vector<double>> a(d, std::vector<double>(n)), b(d, std::vector<double>(n));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t p = 0; p < n; ++p) {
            a[i][p] = tokens[p][i];
            b[i][p] = t[i];
        }
    }
    return mmd2(a, b, c, degree);
}

/// φ by direct evaluation in long double.
inline long double critic(std::span<const double> s, std::span<const double> t, double tau, double n, double m) {
    long double dot = 0.0L;
    for (std::size_t i = 0; i < s.size(); ++i) dot += static_cast<long double>(s[i]) * t[i];
    const long double e = std::exp(dot / tau);
    return e / (e + static_cast<long double>(n) / m);
}

/// CRD loss over a batch: tokens[b][p] are student vectors of sample b,
/// teacher[b] its teacher vector; per-token contributions averaged.
inline double crd(const std::vector<std::vector<std::vector<double>>>& tokens,
                  const std::vector<std::vector<double>>& teacher, double tau, double m) {
    const std::size_t B = teacher.size();
    const double n = B > 1 ? static_cast<double>(B - 1) : 1.0;  // floor at 1/M
    long double total = 0.0L;
    std::size_t count = 0;
    for (std::size_t b = 0; b < B; ++b) {
        for (const auto& s : tokens[b]) {
            ++count;
            total -= std::log(critic(s, teacher[b], tau, n, m));
            for (std::size_t c = 0; c < B; ++c) {
                if (c != b) total -= std::log1p(-critic(s, teacher[c], tau, n, m));
            }
        }
    }
    return static_cast<double>(total / count);
}

/// Mean NLL of targets at masked rows, from raw logits rows.
inline double mlm(const std::vector<std::vector<double>>& logits, const std::vector<int>& targets,
                  const std::vector<bool>& masked) {
    long double total = 0.0L;
    std::size_t n = 0;
    for (std::size_t r = 0; r < logits.size(); ++r) {
        if (!masked[r]) continue;
        long double z = 0.0L;
        for (double v : logits[r]) z += std::exp(static_cast<long double>(v));
        total += std::log(z) - logits[r][targets[r]];
        ++n;
    }
    return static_cast<double>(total / n);
}

inline double mae(const std::vector<double>& p, const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - g[i]);
    return s / p.size();
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// Threshold-table binning, written independently of the library's rules.
inline std::optional<int> bin(double s, const std::string& scheme) {
    if (scheme == "7") {
        for (int k = -3; k <= 3; ++k) {
            const double lo = k - 0.5, hi = k + 0.5;
            // half away from zero: ties go to the larger magnitude
            if ((k > 0 && s >= lo && (s < hi || k == 3)) || (k < 0 && s <= hi && (s > lo || k == -3)) ||
                (k == 0 && s > -0.5 && s < 0.5)) {
                return k;
            }
        }
    }
    if (scheme == "5") return bin(std::min(2.0, std::max(-2.0, s)), "7");
    if (scheme == "3") return s > 0 ? 1 : (s < 0 ? -1 : 0);
    if (scheme == "2_with_neutral") return s >= 0 ? 1 : 0;
    if (scheme == "2_without_neutral") {
        if (s == 0) return std::nullopt;
        return s > 0 ? 1 : 0;
    }
    return std::nullopt;
}

/// Scalar Adam(W) recurrence for one parameter.
struct AdamScalar {
    double p, m = 0, v = 0;
    int t = 0;
    void step(double g, double lr, double wd, bool decay = true) {
        ++t;
        if (decay) p -= lr * wd * p;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        p -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
};

}  // namespace oracle
