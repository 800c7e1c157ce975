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

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace kmmd {

// Dense row-major matrix of doubles. Rows are points, columns are ambient
// coordinates.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// A two-sample dataset. Both samples live in the same ambient dimension;
// rows of x come first in any pooled indexing.
struct TwoSampleData {
    Matrix x;
    Matrix y;

    std::size_t n_x() const { return x.rows(); }
    std::size_t n_y() const { return y.rows(); }
    std::size_t pooled_size() const { return x.rows() + y.rows(); }
    std::size_t ambient_dim() const { return x.cols(); }

    std::span<const double> pooled_row(std::size_t i) const {
        return i < x.rows() ? x.row(i) : y.row(i - x.rows());
    }

    void validate() const {
        if (x.cols() != y.cols())
            throw std::invalid_argument("two-sample data: ambient dimensions differ");
        if (x.rows() == 0 || y.rows() == 0)
            throw std::invalid_argument("two-sample data: empty sample");
    }
};

// Fixed-shape tree summation. The reduction order depends only on the length
// of the input, never on how work was scheduled, so parallel and serial
// callers produce bit-identical totals.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 32) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(std::span<const double> v) {
    return pairwise_sum(v.data(), v.size());
}

// Runs fn(begin, end) over a contiguous partition of [0, n). The partition is
// a pure function of (n, n_threads), and each index is owned by exactly one
// worker, so any output written per index is deterministic.
inline void parallel_blocks(std::size_t n, unsigned n_threads,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = n_threads == 0 ? 1 : n_threads;
    if (workers > n) workers = n;
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr err;
    std::mutex err_mutex;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = begin + chunk < n ? begin + chunk : n;
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace kmmd
