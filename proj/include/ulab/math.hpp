// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Distribution kernels shared by the model, the target constructors and the losses.
// Everything is double precision; every exponential is taken after subtracting the max.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "ulab/error.hpp"

namespace ulab {

/// Pre-softmax scores over the vocabulary for one sequence position.
struct LogitVector {
    std::vector<double> values;

    LogitVector() = default;
    explicit LogitVector(std::vector<double> v) : values(std::move(v)) {}
    LogitVector(std::initializer_list<double> v) : values(v) {}
    explicit LogitVector(std::span<const double> v) : values(v.begin(), v.end()) {}

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
    std::span<const double> span() const noexcept { return values; }
};

/// A categorical distribution over the vocabulary.
struct ProbVector {
    std::vector<double> values;

    ProbVector() = default;
    explicit ProbVector(std::vector<double> v) : values(std::move(v)) {}
    ProbVector(std::initializer_list<double> v) : values(v) {}

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<const double> span() const noexcept { return values; }
};

/// Probability floor applied before every log of a probability in training and evaluation paths.
inline constexpr double kProbFloor = 1e-12;

/// Sum with a fixed pairwise reduction tree, so the result does not depend on how a caller
/// chunks the work.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean(std::span<const double> xs) {
    return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// log(sum_i exp(x_i)) over all i except `skip` (pass npos to include everything).
/// The skipped entry is masked out of both the max and the sum.
inline double logsumexp(std::span<const double> x, std::size_t skip = static_cast<std::size_t>(-1)) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i != skip) m = std::max(m, x[i]);
    }
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i != skip) s += std::exp(x[i] - m);
    }
    return m + std::log(s);
}

inline void softmax_into(std::span<const double> x, std::span<double> out) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        s += out[i];
    }
    for (double& v : out) v /= s;
}

inline ProbVector softmax(std::span<const double> x) {
    std::vector<double> out(x.size());
    softmax_into(x, out);
    return ProbVector(std::move(out));
}

inline ProbVector softmax(const LogitVector& x) { return softmax(x.span()); }

inline std::vector<double> log_softmax(std::span<const double> x) {
    const double lse = logsumexp(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
    return out;
}

/// KL(p || q) = sum_i p_i log(p_i / q_i), with 0 log(0/q) = 0.
/// Returns +infinity when q_i = 0 where p_i > 0.
inline double kl_div(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("kl_div: distributions differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        s += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(s, 0.0);
}

inline double kl_div(const ProbVector& p, const ProbVector& q) { return kl_div(p.span(), q.span()); }

/// KL(p || q) with q floored at kProbFloor; always finite.
inline double kl_div_clamped(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("kl_div: distributions differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        s += p[i] * (std::log(std::max(p[i], kProbFloor)) - std::log(std::max(q[i], kProbFloor)));
    }
    return std::max(s, 0.0);
}

/// Shannon entropy in nats.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

inline std::size_t argmax(std::span<const double> x) {
    return static_cast<std::size_t>(std::distance(x.begin(), std::max_element(x.begin(), x.end())));
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

} // namespace ulab
