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

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "kernels.hpp"

namespace kmmd {

enum class StatisticVariant { biased, unbiased, linear };

inline std::string_view to_string(StatisticVariant v) {
    switch (v) {
        case StatisticVariant::biased: return "biased";
        case StatisticVariant::unbiased: return "unbiased";
        case StatisticVariant::linear: return "linear";
    }
    throw std::logic_error("unknown statistic variant");
}

inline StatisticVariant statistic_variant_from_string(std::string_view name) {
    if (name == "biased") return StatisticVariant::biased;
    if (name == "unbiased") return StatisticVariant::unbiased;
    if (name == "linear") return StatisticVariant::linear;
    throw std::invalid_argument("unknown statistic variant '" + std::string(name) +
                                "' (expected biased, unbiased or linear)");
}

struct StatisticValue {
    double value = 0.0;
    StatisticVariant variant = StatisticVariant::biased;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
};

namespace detail {

struct BlockSums {
    double xx = 0.0;   // full X block, diagonal included
    double yy = 0.0;   // full Y block, diagonal included
    double xy = 0.0;   // cross block
    double diag_x = 0.0;
    double diag_y = 0.0;
};

inline BlockSums block_sums(const KernelMatrix& k) {
    const std::size_t nx = k.n_x;
    const std::size_t ny = k.n_y;
    const std::size_t n = nx + ny;
    std::vector<double> row_xx(nx), row_xy(nx), row_yy(ny), dx(nx), dy(ny);
    for (std::size_t i = 0; i < nx; ++i) {
        const auto row = k.values.row(i);
        row_xx[i] = pairwise_sum(row.subspan(0, nx));
        row_xy[i] = pairwise_sum(row.subspan(nx, n - nx));
        dx[i] = k(i, i);
    }
    for (std::size_t j = 0; j < ny; ++j) {
        row_yy[j] = pairwise_sum(k.values.row(nx + j).subspan(nx, n - nx));
        dy[j] = k(nx + j, nx + j);
    }
    BlockSums s;
    s.xx = pairwise_sum(row_xx);
    s.xy = pairwise_sum(row_xy);
    s.yy = pairwise_sum(row_yy);
    s.diag_x = pairwise_sum(dx);
    s.diag_y = pairwise_sum(dy);
    return s;
}

}  // namespace detail

// Plug-in two-sample statistic: the two within-sample block means, diagonals
// included, minus twice the cross-block mean.
inline StatisticValue mmd_biased(const KernelMatrix& k) {
    if (k.n_x == 0 || k.n_y == 0)
        throw std::invalid_argument("mmd_biased: both samples must be nonempty");
    const double nx = static_cast<double>(k.n_x);
    const double ny = static_cast<double>(k.n_y);
    const auto s = detail::block_sums(k);
    StatisticValue out;
    out.value = s.xx / (nx * nx) + s.yy / (ny * ny) - 2.0 * s.xy / (nx * ny);
    out.variant = StatisticVariant::biased;
    out.n_x = k.n_x;
    out.n_y = k.n_y;
    return out;
}

// Diagonal-free variant: within-sample sums drop the diagonal and average
// over ordered pairs of distinct indices; the cross term is unchanged.
inline StatisticValue mmd_unbiased(const KernelMatrix& k) {
    if (k.n_x < 2 || k.n_y < 2)
        throw std::invalid_argument("mmd_unbiased: need at least two points per sample");
    const double nx = static_cast<double>(k.n_x);
    const double ny = static_cast<double>(k.n_y);
    const auto s = detail::block_sums(k);
    StatisticValue out;
    out.value = (s.xx - s.diag_x) / (nx * (nx - 1.0)) + (s.yy - s.diag_y) / (ny * (ny - 1.0)) -
                2.0 * s.xy / (nx * ny);
    out.variant = StatisticVariant::unbiased;
    out.n_x = k.n_x;
    out.n_y = k.n_y;
    return out;
}

// Streaming estimator over disjoint index pairs. Touches each sample point
// once, so it needs no kernel matrix: with M = n/2 pairs,
//   (1/M) sum_i [K(x_{2i}, x_{2i+1}) - K(x_{2i}, y_{2i+1})
//                - K(y_{2i}, x_{2i+1}) + K(y_{2i}, y_{2i+1})]
// in 0-based indexing. Requires equal, even sample sizes.
inline StatisticValue mmd_linear(const KernelSpec& spec, const TwoSampleData& data) {
    data.validate();
    if (data.n_x() != data.n_y())
        throw std::invalid_argument("mmd_linear: sample sizes must be equal");
    if (data.n_x() % 2 != 0 || data.n_x() == 0)
        throw std::invalid_argument("mmd_linear: sample size must be even and positive");
    const std::size_t pairs = data.n_x() / 2;
    std::vector<double> terms(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        const std::size_t a = 2 * i;
        const std::size_t b = 2 * i + 1;
        terms[i] = kernel_entry(spec, data.x.row(a), data.x.row(b)) -
                   kernel_entry(spec, data.x.row(a), data.y.row(b)) -
                   kernel_entry(spec, data.y.row(a), data.x.row(b)) +
                   kernel_entry(spec, data.y.row(a), data.y.row(b));
    }
    StatisticValue out;
    out.value = pairwise_sum(terms) / static_cast<double>(pairs);
    out.variant = StatisticVariant::linear;
    out.n_x = data.n_x();
    out.n_y = data.n_y();
    return out;
}

// Empirical witness function, evaluated at each query row:
//   w(t) = -(1/n_x) sum_i K(t, x_i) + (1/n_y) sum_j K(t, y_j).
// Positive where the second sample is locally denser.
inline std::vector<double> witness(const KernelSpec& spec, const TwoSampleData& data,
                                   const Matrix& queries) {
    data.validate();
    if (queries.cols() != data.ambient_dim())
        throw std::invalid_argument("witness: query dimension mismatch");
    const double nx = static_cast<double>(data.n_x());
    const double ny = static_cast<double>(data.n_y());
    std::vector<double> out(queries.rows());
    std::vector<double> kx(data.n_x()), ky(data.n_y());
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const auto t = queries.row(q);
        for (std::size_t i = 0; i < data.n_x(); ++i)
            kx[i] = kernel_entry(spec, t, data.x.row(i));
        for (std::size_t j = 0; j < data.n_y(); ++j)
            ky[j] = kernel_entry(spec, t, data.y.row(j));
        out[q] = -pairwise_sum(kx) / nx + pairwise_sum(ky) / ny;
    }
    return out;
}

// Full-matrix sum; invariant under any relabeling of the pooled sample.
inline double kernel_matrix_total(const KernelMatrix& k) {
    const std::size_t n = k.size();
    std::vector<double> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = pairwise_sum(k.values.row(i));
    return pairwise_sum(rows);
}

// Statistic under a relabeling of the pooled sample: order[0..n_x) are the
// indices assigned to X, order[n_x..n) the indices assigned to Y. Only reads
// entries of the precomputed kernel matrix; nothing is re-evaluated. The
// cross-block sum follows from the relabeling-invariant total, so one call
// costs the two within-block sums.
inline double relabeled_statistic(const KernelMatrix& k, StatisticVariant variant,
                                  std::span<const std::uint32_t> order,
                                  std::optional<double> precomputed_total = std::nullopt) {
    const std::size_t nx = k.n_x;
    const std::size_t ny = k.n_y;
    if (order.size() != nx + ny)
        throw std::invalid_argument("relabeled_statistic: order size mismatch");

    if (variant == StatisticVariant::linear) {
        if (nx != ny || nx % 2 != 0 || nx == 0)
            throw std::invalid_argument(
                "relabeled_statistic: linear variant needs equal even sizes");
        const std::size_t pairs = nx / 2;
        double s = 0.0;
        for (std::size_t i = 0; i < pairs; ++i) {
            const std::uint32_t xa = order[2 * i], xb = order[2 * i + 1];
            const std::uint32_t ya = order[nx + 2 * i], yb = order[nx + 2 * i + 1];
            s += k(xa, xb) - k(xa, yb) - k(ya, xb) + k(ya, yb);
        }
        return s / static_cast<double>(pairs);
    }

    const double total = precomputed_total ? *precomputed_total : kernel_matrix_total(k);
    double sxx = 0.0, dxx = 0.0;
    for (std::size_t p = 0; p < nx; ++p) {
        const std::uint32_t a = order[p];
        dxx += k(a, a);
        for (std::size_t q = p + 1; q < nx; ++q) sxx += k(a, order[q]);
    }
    double syy = 0.0, dyy = 0.0;
    for (std::size_t p = nx; p < nx + ny; ++p) {
        const std::uint32_t a = order[p];
        dyy += k(a, a);
        for (std::size_t q = p + 1; q < nx + ny; ++q) syy += k(a, order[q]);
    }
    sxx = 2.0 * sxx + dxx;
    syy = 2.0 * syy + dyy;
    const double sxy = 0.5 * (total - sxx - syy);
    const double fx = static_cast<double>(nx);
    const double fy = static_cast<double>(ny);
    if (variant == StatisticVariant::biased)
        return sxx / (fx * fx) + syy / (fy * fy) - 2.0 * sxy / (fx * fy);
    if (nx < 2 || ny < 2)
        throw std::invalid_argument("relabeled_statistic: unbiased variant needs two per group");
    return (sxx - dxx) / (fx * (fx - 1.0)) + (syy - dyy) / (fy * (fy - 1.0)) -
           2.0 * sxy / (fx * fy);
}

}  // namespace kmmd
