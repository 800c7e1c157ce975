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
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "kernels.hpp"
#include "rng.hpp"
#include "statistics.hpp"

namespace kmmd {

struct TestConfig {
    double alpha_level = 0.05;
    std::size_t n_boot = 300;
    std::uint64_t seed = 0;
    StatisticVariant statistic_variant = StatisticVariant::biased;
    bool keep_bootstrap_values = false;
    unsigned n_threads = 1;

    void validate() const {
        if (!(alpha_level > 0.0) || !(alpha_level < 1.0))
            throw std::invalid_argument("test config: alpha_level must lie in (0, 1)");
        if (n_boot == 0) throw std::invalid_argument("test config: n_boot must be positive");
    }
};

struct TestOutcome {
    double statistic = 0.0;
    double threshold = 0.0;
    bool reject = false;
    std::vector<double> bootstrap_values;  // populated only on request
};

struct BootstrapResult {
    double threshold = 0.0;
    std::vector<double> values;
};

// ceil((1 - alpha) n)-th order statistic (1-indexed) of the given values.
// The rank computation is guarded against (1 - alpha) n landing a hair above
// an integer through rounding.
inline double bootstrap_quantile(std::vector<double> values, double alpha) {
    if (values.empty()) throw std::invalid_argument("bootstrap_quantile: empty sample");
    const double target = (1.0 - alpha) * static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(target - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
    return values[rank - 1];
}

// Permutation null distribution of the chosen statistic. Each replicate
// relabels the pooled sample with a Fisher-Yates permutation drawn from its
// own derived stream and re-reads the precomputed kernel matrix; nothing is
// re-evaluated. Replicate l depends only on (cfg.seed, l), so the result is
// independent of the worker count.
inline BootstrapResult bootstrap_threshold(const KernelMatrix& k, const TestConfig& cfg) {
    cfg.validate();
    const std::size_t n = k.size();
    if (k.n_x == 0 || k.n_y == 0)
        throw std::invalid_argument("bootstrap_threshold: both groups must be nonempty");
    const bool needs_total = cfg.statistic_variant != StatisticVariant::linear;
    const double total = needs_total ? kernel_matrix_total(k) : 0.0;
    BootstrapResult out;
    out.values.assign(cfg.n_boot, 0.0);
    parallel_blocks(cfg.n_boot, cfg.n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t l = begin; l < end; ++l) {
            RngStream rng(derive_seed(cfg.seed, "boot", l));
            const auto perm = random_permutation(n, rng);
            out.values[l] = relabeled_statistic(k, cfg.statistic_variant, perm,
                                                needs_total ? std::optional<double>(total)
                                                            : std::nullopt);
        }
    });
    out.threshold = bootstrap_quantile(out.values, cfg.alpha_level);
    return out;
}

inline double observed_statistic(const KernelSpec& spec, const TwoSampleData& data,
                                 const KernelMatrix& k, StatisticVariant variant) {
    switch (variant) {
        case StatisticVariant::biased: return mmd_biased(k).value;
        case StatisticVariant::unbiased: return mmd_unbiased(k).value;
        case StatisticVariant::linear: return mmd_linear(spec, data).value;
    }
    throw std::logic_error("unknown statistic variant");
}

// One full test: statistic, permutation threshold, decision. Rejection is
// strict; a statistic exactly at the threshold is accepted.
inline TestOutcome run_test(const KernelSpec& spec, const TwoSampleData& data,
                            const TestConfig& cfg) {
    cfg.validate();
    const auto k = build_kernel_matrix(spec, data, cfg.n_threads);
    TestOutcome out;
    out.statistic = observed_statistic(spec, data, k, cfg.statistic_variant);
    auto boot = bootstrap_threshold(k, cfg);
    out.threshold = boot.threshold;
    out.reject = out.statistic > out.threshold;
    if (cfg.keep_bootstrap_values) out.bootstrap_values = std::move(boot.values);
    return out;
}

// sqrt(8 ln(3/alpha)).
inline double concentration_lambda(double alpha) {
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw std::invalid_argument("concentration_lambda: alpha must lie in (0, 1)");
    return std::sqrt(8.0 * std::log(3.0 / alpha));
}

// Inputs of the deviation bound behind the analytic rejection threshold.
struct ThresholdParams {
    double rho_x = 0.5;       // fraction of the pooled sample in X, in (0, 1)
    double rho_max = 1.0;     // upper bound on both sampling densities
    unsigned intrinsic_dim = 1;
    double gamma = 1.0;
    std::size_t n = 1;        // pooled sample size
    double alpha_level = 0.05;
};

// Analytic threshold 2/(c n) + 4 lambda sqrt(nu gamma^d / (c n)) with
// lambda = sqrt(8 ln(3/alpha)), c = 0.9 min(rho_x, 1 - rho_x) and
// nu = (m0_h2 + 1) rho_max, where m0_h2 is the squared-profile moment
// constant of the kernel at the intrinsic dimension.
inline double theoretical_threshold(const ThresholdParams& p, double m0_h2) {
    if (!(p.rho_x > 0.0) || !(p.rho_x < 1.0))
        throw std::invalid_argument("theoretical_threshold: rho_x must lie in (0, 1)");
    if (!(p.rho_max > 0.0) || !std::isfinite(p.rho_max))
        throw std::invalid_argument("theoretical_threshold: rho_max must be positive");
    if (!(p.gamma > 0.0) || !std::isfinite(p.gamma))
        throw std::invalid_argument("theoretical_threshold: gamma must be positive");
    if (p.n == 0) throw std::invalid_argument("theoretical_threshold: n must be positive");
    if (p.intrinsic_dim == 0)
        throw std::invalid_argument("theoretical_threshold: dimension must be positive");
    if (!(m0_h2 >= 0.0) || !std::isfinite(m0_h2))
        throw std::invalid_argument("theoretical_threshold: m0_h2 must be nonnegative");
    const double lambda = concentration_lambda(p.alpha_level);
    const double c = 0.9 * std::min(p.rho_x, 1.0 - p.rho_x);
    const double nu = (m0_h2 + 1.0) * p.rho_max;
    const double cn = c * static_cast<double>(p.n);
    const double gamma_d = std::pow(p.gamma, static_cast<double>(p.intrinsic_dim));
    return 2.0 / cn + 4.0 * lambda * std::sqrt(nu * gamma_d / cn);
}

struct PowerEstimate {
    std::size_t rejections = 0;
    std::size_t n_run = 0;
    double power = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

// Wilson 95% score interval for a binomial proportion.
inline PowerEstimate wilson_power_estimate(std::size_t rejections, std::size_t n_run) {
    if (n_run == 0) throw std::invalid_argument("wilson_power_estimate: n_run must be positive");
    if (rejections > n_run)
        throw std::invalid_argument("wilson_power_estimate: more rejections than runs");
    constexpr double z = 1.95996398454005424;
    const double n = static_cast<double>(n_run);
    const double phat = static_cast<double>(rejections) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    PowerEstimate out;
    out.rejections = rejections;
    out.n_run = n_run;
    out.power = phat;
    out.ci_low = std::max(0.0, center - half);
    out.ci_high = std::min(1.0, center + half);
    return out;
}

namespace detail {

// Shared replica loop. Replica i draws its data from a stream derived from
// (cfg.seed, "replica", i) and its permutations from (cfg.seed,
// "boot-replica", i), so estimates are reproducible for any worker count and
// any subset of replicas.
template <typename Generator, typename Resolver>
PowerEstimate power_loop(Generator&& generator, Resolver&& resolve, const TestConfig& cfg,
                         std::size_t n_run, double* mean_bandwidth) {
    cfg.validate();
    if (n_run == 0) throw std::invalid_argument("estimate_power: n_run must be positive");
    std::vector<char> rejected(n_run, 0);
    std::vector<double> bandwidths(n_run, 0.0);
    parallel_blocks(n_run, cfg.n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const TwoSampleData data = generator(derive_seed(cfg.seed, "replica", i));
            const auto dists = compute_squared_distances(data);
            const KernelSpec spec = resolve(data, dists);
            const auto k = build_kernel_matrix(spec, dists);
            TestConfig local = cfg;
            local.n_threads = 1;
            local.keep_bootstrap_values = false;
            local.seed = derive_seed(cfg.seed, "boot-replica", i);
            const double stat = observed_statistic(spec, data, k, local.statistic_variant);
            const auto boot = bootstrap_threshold(k, local);
            rejected[i] = stat > boot.threshold ? 1 : 0;
            bandwidths[i] = spec.bandwidth;
        }
    });
    std::size_t hits = 0;
    for (char r : rejected) hits += r;
    if (mean_bandwidth)
        *mean_bandwidth = pairwise_sum(bandwidths) / static_cast<double>(n_run);
    return wilson_power_estimate(hits, n_run);
}

}  // namespace detail

// Monte Carlo power of the test at a fixed kernel. Generator maps a replica
// seed to a fresh two-sample draw.
template <typename Generator>
PowerEstimate estimate_power(Generator&& generator, const KernelSpec& spec,
                             const TestConfig& cfg, std::size_t n_run) {
    return detail::power_loop(
        std::forward<Generator>(generator),
        [&spec](const TwoSampleData&, const SquaredDistances&) { return spec; }, cfg, n_run,
        nullptr);
}

// Power under the median-distance bandwidth rule: each replica picks its own
// bandwidth from its pooled sample. The mean realized bandwidth is reported
// through mean_bandwidth when given.
template <typename Generator>
PowerEstimate estimate_power_median(Generator&& generator, KernelFamily family,
                                    const TestConfig& cfg, std::size_t n_run,
                                    double* mean_bandwidth = nullptr) {
    return detail::power_loop(
        std::forward<Generator>(generator),
        [family](const TwoSampleData&, const SquaredDistances& dists) {
            return KernelSpec(family, median_distance_bandwidth(dists));
        },
        cfg, n_run, mean_bandwidth);
}

struct SweepCell {
    double gamma = 0.0;
    PowerEstimate estimate;
};

// Power across a bandwidth ladder with common random numbers: every gamma
// sees the same replica draws and the same permutations, so cells differ only
// through the kernel. Distances are computed once per replica and reused.
template <typename Generator>
std::vector<SweepCell> bandwidth_sweep(Generator&& generator, KernelFamily family,
                                       std::span<const double> gammas, const TestConfig& cfg,
                                       std::size_t n_run) {
    cfg.validate();
    if (n_run == 0) throw std::invalid_argument("bandwidth_sweep: n_run must be positive");
    if (gammas.empty()) throw std::invalid_argument("bandwidth_sweep: empty bandwidth list");
    const std::size_t cells = gammas.size();
    std::vector<std::size_t> hits(cells, 0);
    std::mutex hits_mutex;
    parallel_blocks(n_run, cfg.n_threads, [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> local_hits(cells, 0);
        for (std::size_t i = begin; i < end; ++i) {
            const TwoSampleData data = generator(derive_seed(cfg.seed, "replica", i));
            const auto dists = compute_squared_distances(data);
            const std::size_t n = dists.size();
            std::vector<std::vector<std::uint32_t>> perms(cfg.n_boot);
            for (std::size_t l = 0; l < cfg.n_boot; ++l) {
                RngStream rng(derive_seed(derive_seed(cfg.seed, "boot-replica", i), "boot", l));
                perms[l] = random_permutation(n, rng);
            }
            for (std::size_t g = 0; g < cells; ++g) {
                const KernelSpec spec(family, gammas[g]);
                const auto k = build_kernel_matrix(spec, dists);
                const double stat = observed_statistic(spec, data, k, cfg.statistic_variant);
                const bool needs_total = cfg.statistic_variant != StatisticVariant::linear;
                const double total = needs_total ? kernel_matrix_total(k) : 0.0;
                std::vector<double> values(cfg.n_boot);
                for (std::size_t l = 0; l < cfg.n_boot; ++l)
                    values[l] = relabeled_statistic(k, cfg.statistic_variant, perms[l],
                                                    needs_total ? std::optional<double>(total)
                                                                : std::nullopt);
                const double threshold = bootstrap_quantile(std::move(values), cfg.alpha_level);
                if (stat > threshold) ++local_hits[g];
            }
        }
        std::lock_guard<std::mutex> lock(hits_mutex);
        for (std::size_t g = 0; g < cells; ++g) hits[g] += local_hits[g];
    });
    std::vector<SweepCell> out(cells);
    for (std::size_t g = 0; g < cells; ++g) {
        out[g].gamma = gammas[g];
        out[g].estimate = wilson_power_estimate(hits[g], n_run);
    }
    return out;
}

}  // namespace kmmd
