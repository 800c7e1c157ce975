/*
 * Copyright (c) 2026, kmmd project contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "core.hpp"

namespace kmmd {

// Radial profiles h(r), applied to r = squared distance / bandwidth^2.
// None of them is required to be positive semi-definite.
enum class KernelFamily { gaussian, sigmoid_shifted, sinc, indicator };

inline std::string_view to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::sigmoid_shifted: return "sigmoid_shifted";
        case KernelFamily::sinc: return "sinc";
        case KernelFamily::indicator: return "indicator";
    }
    throw std::logic_error("unknown kernel family");
}

inline KernelFamily kernel_family_from_string(std::string_view name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "sigmoid_shifted") return KernelFamily::sigmoid_shifted;
    if (name == "sinc") return KernelFamily::sinc;
    if (name == "indicator") return KernelFamily::indicator;
    throw std::invalid_argument(
        "unknown kernel family '" + std::string(name) +
        "' (expected gaussian, sigmoid_shifted, sinc or indicator)");
}

// h(r) for r >= 0.
//   gaussian         exp(-r/2)
//   sigmoid_shifted  1 / (1 + exp(10 (r - 2)))
//   sinc             sin(pi r / 2) / (pi r / 2), continued by 1 at r = 0
//   indicator        1 on [0, 2), 0 elsewhere
inline double eval_h(KernelFamily family, double r) {
    if (!(r >= 0.0) || !std::isfinite(r))
        throw std::domain_error("eval_h: argument must be finite and nonnegative");
    switch (family) {
        case KernelFamily::gaussian:
            return std::exp(-0.5 * r);
        case KernelFamily::sigmoid_shifted:
            return 1.0 / (1.0 + std::exp(10.0 * (r - 2.0)));
        case KernelFamily::sinc: {
            const double t = 0.5 * std::numbers::pi * r;
            return t == 0.0 ? 1.0 : std::sin(t) / t;
        }
        case KernelFamily::indicator:
            return r < 2.0 ? 1.0 : 0.0;
    }
    throw std::logic_error("unknown kernel family");
}

struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double bandwidth = 1.0;

    KernelSpec() = default;
    KernelSpec(KernelFamily f, double gamma) : family(f), bandwidth(gamma) {
        if (!std::isfinite(gamma) || gamma <= 0.0)
            throw std::invalid_argument("kernel bandwidth must be positive and finite");
    }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

inline double eval_h(const KernelSpec& spec, double r) { return eval_h(spec.family, r); }

inline double kernel_entry(const KernelSpec& spec, std::span<const double> a,
                           std::span<const double> b) {
    return eval_h(spec.family, squared_distance(a, b) / (spec.bandwidth * spec.bandwidth));
}

// Pooled squared-distance table for a two-sample dataset. Computed once,
// reused across bandwidths. Entry (i, j) is the squared Euclidean distance
// between pooled rows i and j; the diagonal is exactly zero and each
// unordered pair is evaluated once and mirrored.
struct SquaredDistances {
    Matrix values;
    std::size_t n_x = 0;
    std::size_t n_y = 0;

    std::size_t size() const { return n_x + n_y; }
    double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

inline SquaredDistances compute_squared_distances(const TwoSampleData& data,
                                                  unsigned n_threads = 1) {
    data.validate();
    const std::size_t n = data.pooled_size();
    SquaredDistances out;
    out.n_x = data.n_x();
    out.n_y = data.n_y();
    out.values = Matrix(n, n, 0.0);
    parallel_blocks(n, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto ri = data.pooled_row(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = squared_distance(ri, data.pooled_row(j));
                out.values(i, j) = d;
                out.values(j, i) = d;
            }
        }
    });
    return out;
}

// Kernel matrix over the pooled sample. Symmetric by construction: each
// off-diagonal value is computed once and written to both triangles, and the
// diagonal is exactly h(0).
struct KernelMatrix {
    Matrix values;
    std::size_t n_x = 0;
    std::size_t n_y = 0;

    std::size_t size() const { return n_x + n_y; }
    double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

inline KernelMatrix build_kernel_matrix(const KernelSpec& spec, const SquaredDistances& dists,
                                        unsigned n_threads = 1) {
    const std::size_t n = dists.size();
    if (n == 0) throw std::invalid_argument("build_kernel_matrix: empty distance table");
    KernelMatrix out;
    out.n_x = dists.n_x;
    out.n_y = dists.n_y;
    out.values = Matrix(n, n, 0.0);
    const double gamma2 = spec.bandwidth * spec.bandwidth;
    const double diag = eval_h(spec.family, 0.0);
    parallel_blocks(n, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out.values(i, i) = diag;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double v = eval_h(spec.family, dists(i, j) / gamma2);
                out.values(i, j) = v;
                out.values(j, i) = v;
            }
        }
    });
    return out;
}

inline KernelMatrix build_kernel_matrix(const KernelSpec& spec, const TwoSampleData& data,
                                        unsigned n_threads = 1) {
    return build_kernel_matrix(spec, compute_squared_distances(data, n_threads), n_threads);
}

// Median of the n(n-1)/2 pairwise Euclidean distances of the pooled sample.
// An even count averages the two middle order statistics. A degenerate sample
// (all points identical) yields 0, which no kernel accepts as a bandwidth.
inline double median_distance_bandwidth(const SquaredDistances& dists) {
    const std::size_t n = dists.size();
    if (n < 2)
        throw std::invalid_argument("median_distance_bandwidth: need at least two points");
    std::vector<double> sq;
    sq.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) sq.push_back(dists(i, j));
    const std::size_t count = sq.size();
    const std::size_t upper = count / 2;
    if (count % 2 == 1) {
        std::nth_element(sq.begin(), sq.begin() + upper, sq.end());
        return std::sqrt(sq[upper]);
    }
    std::nth_element(sq.begin(), sq.begin() + upper, sq.end());
    const double hi = sq[upper];
    const double lo = *std::max_element(sq.begin(), sq.begin() + upper);
    return 0.5 * (std::sqrt(lo) + std::sqrt(hi));
}

inline double median_distance_bandwidth(const TwoSampleData& data) {
    return median_distance_bandwidth(compute_squared_distances(data));
}

}  // namespace kmmd
