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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kmmd/datagen.hpp"
#include "kmmd/testing.hpp"

using namespace kmmd;

namespace {

TwoSampleData normal_pair_data(std::size_t n_x, std::size_t n_y, std::size_t dim,
                          std::uint64_t seed) {
    RngStream rng(seed);
    TwoSampleData data;
    data.x = Matrix(n_x, dim);
    data.y = Matrix(n_y, dim);
    for (auto& v : data.x.data()) v = rng.normal();
    for (auto& v : data.y.data()) v = rng.normal();
    return data;
}

// Replica generator over the circle: X from p, Y from q, embedded in R^m.
auto circle_generator(const LatentDensitySpec& p, const LatentDensitySpec& q, std::size_t n,
                      std::size_t ambient_dim) {
    ManifoldSpec manifold;
    manifold.ambient_dim = ambient_dim;
    return [p, q, n, manifold](std::uint64_t replica_seed) {
        RngStream sx(derive_seed(replica_seed, "latent-x"));
        RngStream sy(derive_seed(replica_seed, "latent-y"));
        TwoSampleData data;
        data.x = embed_circle(sample_latent(p, n, sx), manifold);
        data.y = embed_circle(sample_latent(q, n, sy), manifold);
        return data;
    };
}

}  // namespace

TEST(BootstrapQuantile, OrderStatisticRanks) {
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    EXPECT_DOUBLE_EQ(bootstrap_quantile(v, 0.05), 10.0);
    EXPECT_DOUBLE_EQ(bootstrap_quantile(v, 0.5), 5.0);
    EXPECT_DOUBLE_EQ(bootstrap_quantile(v, 0.25), 8.0);
    const std::vector<double> w{5, 1, 3, 2, 4};
    EXPECT_DOUBLE_EQ(bootstrap_quantile(w, 0.2), 4.0);
    EXPECT_DOUBLE_EQ(bootstrap_quantile(w, 0.999), 1.0);
}

TEST(BootstrapQuantile, MonotoneInAlpha) {
    std::vector<double> v;
    RngStream rng(8);
    for (int i = 0; i < 199; ++i) v.push_back(rng.normal());
    double prev = bootstrap_quantile(v, 0.01);
    for (double alpha : {0.05, 0.1, 0.25, 0.5, 0.9}) {
        const double cur = bootstrap_quantile(v, alpha);
        EXPECT_LE(cur, prev);
        prev = cur;
    }
}

TEST(BootstrapThreshold, DeterministicAcrossWorkerCounts) {
    const auto data = normal_pair_data(20, 24, 3, 61);
    const auto k = build_kernel_matrix(KernelSpec(KernelFamily::gaussian, 0.9), data);
    TestConfig cfg;
    cfg.n_boot = 64;
    cfg.seed = 5;
    cfg.n_threads = 1;
    const auto one = bootstrap_threshold(k, cfg);
    cfg.n_threads = 4;
    const auto four = bootstrap_threshold(k, cfg);
    ASSERT_EQ(one.values.size(), four.values.size());
    for (std::size_t i = 0; i < one.values.size(); ++i)
        EXPECT_EQ(one.values[i], four.values[i]);
    EXPECT_EQ(one.threshold, four.threshold);
}

TEST(BootstrapThreshold, ReplicateStreamsFollowTheDocumentedChain) {
    // Replicate l must use exactly the permutation drawn from the stream
    // seeded with derive_seed(seed, "boot", l); rebuild it by hand.
    const auto data = normal_pair_data(14, 9, 2, 42);
    const auto k = build_kernel_matrix(KernelSpec(KernelFamily::gaussian, 0.8), data);
    TestConfig cfg;
    cfg.n_boot = 25;
    cfg.seed = 3;
    const auto boot = bootstrap_threshold(k, cfg);
    const double total = kernel_matrix_total(k);
    for (std::size_t l = 0; l < cfg.n_boot; ++l) {
        RngStream rng(derive_seed(cfg.seed, "boot", l));
        const auto perm = random_permutation(k.size(), rng);
        const double expected =
            relabeled_statistic(k, StatisticVariant::biased, perm, total);
        EXPECT_EQ(boot.values[l], expected) << "replicate " << l;
    }
}

TEST(RunTest, TieIsAccepted) {
    // Identical points: every kernel entry is 1, the statistic and all
    // permuted statistics are exactly 0, and the strict comparison accepts.
    TwoSampleData data;
    data.x = Matrix(8, 2, 0.7);
    data.y = Matrix(8, 2, 0.7);
    TestConfig cfg;
    cfg.n_boot = 50;
    cfg.seed = 11;
    const auto outcome = run_test(KernelSpec(KernelFamily::gaussian, 1.0), data, cfg);
    EXPECT_EQ(outcome.statistic, 0.0);
    EXPECT_EQ(outcome.threshold, 0.0);
    EXPECT_FALSE(outcome.reject);
}

TEST(RunTest, KeepsBootstrapValuesOnRequest) {
    const auto data = normal_pair_data(10, 12, 2, 19);
    TestConfig cfg;
    cfg.n_boot = 37;
    cfg.keep_bootstrap_values = true;
    const auto outcome = run_test(KernelSpec(KernelFamily::gaussian, 1.0), data, cfg);
    EXPECT_EQ(outcome.bootstrap_values.size(), 37u);
    TestConfig quiet = cfg;
    quiet.keep_bootstrap_values = false;
    EXPECT_TRUE(run_test(KernelSpec(KernelFamily::gaussian, 1.0), data, quiet)
                    .bootstrap_values.empty());
}

TEST(RunTest, RejectsClearlySeparatedSamples) {
    auto data = normal_pair_data(20, 20, 2, 23);
    for (auto& v : data.y.data()) v += 6.0;
    TestConfig cfg;
    cfg.n_boot = 200;
    cfg.seed = 4;
    const auto outcome = run_test(KernelSpec(KernelFamily::gaussian, 1.0), data, cfg);
    EXPECT_TRUE(outcome.reject);
    EXPECT_GT(outcome.statistic, outcome.threshold);
}

TEST(TestConfig, Validation) {
    TestConfig cfg;
    cfg.alpha_level = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.alpha_level = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.alpha_level = 0.05;
    cfg.n_boot = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TheoreticalThreshold, FrozenConcentrationConstant) {
    // Independent arbitrary-precision evaluation of sqrt(8 ln 60).
    EXPECT_NEAR(concentration_lambda(0.05), 5.723177133181953637, 1e-12);
}

TEST(TheoreticalThreshold, FrozenExampleValue) {
    // rho_x = 1/2, rho_max = 1/(2 pi), d = 1, gamma = 0.1, n = 1000,
    // gaussian m0[h^2] = sqrt(pi); value frozen from a 40-digit evaluation.
    ThresholdParams p;
    p.rho_x = 0.5;
    p.rho_max = 1.0 / (2.0 * std::numbers::pi);
    p.intrinsic_dim = 1;
    p.gamma = 0.1;
    p.n = 1000;
    p.alpha_level = 0.05;
    const double m0_h2 = std::sqrt(std::numbers::pi);
    EXPECT_NEAR(theoretical_threshold(p, m0_h2), 0.23113485590847506979, 1e-12);
}

TEST(TheoreticalThreshold, DecreasesInSampleSize) {
    ThresholdParams p;
    p.rho_x = 0.4;
    p.rho_max = 0.2;
    p.intrinsic_dim = 1;
    p.gamma = 0.2;
    p.alpha_level = 0.05;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {100, 1000, 10000, 100000, 1000000}) {
        p.n = n;
        const double cur = theoretical_threshold(p, 1.7);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(TheoreticalThreshold, Validation) {
    ThresholdParams p;
    p.rho_x = 0.0;
    EXPECT_THROW(theoretical_threshold(p, 1.0), std::invalid_argument);
    p.rho_x = 0.5;
    p.gamma = 0.0;
    EXPECT_THROW(theoretical_threshold(p, 1.0), std::invalid_argument);
    p.gamma = 0.1;
    p.n = 0;
    EXPECT_THROW(theoretical_threshold(p, 1.0), std::invalid_argument);
    p.n = 10;
    EXPECT_THROW(theoretical_threshold(p, -0.5), std::invalid_argument);
    p.alpha_level = 1.5;
    EXPECT_THROW(theoretical_threshold(p, 1.0), std::invalid_argument);
}

TEST(WilsonInterval, BracketsThePointEstimateInsideUnitRange) {
    for (std::size_t k : {0u, 1u, 25u, 250u, 499u, 500u}) {
        const auto e = wilson_power_estimate(k, 500);
        EXPECT_GE(e.ci_low, 0.0);
        EXPECT_LE(e.ci_high, 1.0);
        EXPECT_LE(e.ci_low, e.power + 1e-15);
        EXPECT_GE(e.ci_high, e.power - 1e-15);
    }
    EXPECT_NEAR(wilson_power_estimate(0, 500).ci_low, 0.0, 1e-15);
    EXPECT_NEAR(wilson_power_estimate(500, 500).ci_high, 1.0, 1e-15);
}

TEST(WilsonInterval, ShrinksWithSampleSize) {
    const auto small = wilson_power_estimate(10, 50);
    const auto large = wilson_power_estimate(100, 500);
    EXPECT_LT(large.ci_high - large.ci_low, small.ci_high - small.ci_low);
}

TEST(EstimatePower, DeterministicAcrossWorkerCounts) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::cosine_perturbed(LatentDomain::circle, 0.7);
    auto gen = circle_generator(p, q, 24, 3);
    TestConfig cfg;
    cfg.n_boot = 40;
    cfg.seed = 12;
    cfg.n_threads = 1;
    const auto one = estimate_power(gen, KernelSpec(KernelFamily::gaussian, 0.4), cfg, 12);
    cfg.n_threads = 3;
    const auto three = estimate_power(gen, KernelSpec(KernelFamily::gaussian, 0.4), cfg, 12);
    EXPECT_EQ(one.rejections, three.rejections);
    EXPECT_EQ(one.power, three.power);
    EXPECT_EQ(one.ci_low, three.ci_low);
}

TEST(EstimatePower, NearOneForWellSeparatedAlternative) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::piecewise_bump(LatentDomain::circle, 3.0, 0.5, 12.0);
    auto gen = circle_generator(p, q, 100, 3);
    TestConfig cfg;
    cfg.n_boot = 60;
    cfg.seed = 2;
    const auto e = estimate_power(gen, KernelSpec(KernelFamily::gaussian, 0.3), cfg, 20);
    EXPECT_EQ(e.rejections, 20u);
    EXPECT_EQ(e.power, 1.0);
}

TEST(EstimatePower, LevelIsNearAlphaUnderTheNull) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    auto gen = circle_generator(p, p, 60, 3);
    TestConfig cfg;
    cfg.n_boot = 100;
    cfg.seed = 31;
    const auto e = estimate_power(gen, KernelSpec(KernelFamily::gaussian, 0.5), cfg, 200);
    EXPECT_GE(e.power, 0.005);
    EXPECT_LE(e.power, 0.10);
}

TEST(EstimatePowerMedian, ReportsRealizedBandwidth) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::cosine_perturbed(LatentDomain::circle, 0.6);
    auto gen = circle_generator(p, q, 30, 4);
    TestConfig cfg;
    cfg.n_boot = 30;
    cfg.seed = 8;
    double mean_gamma = 0.0;
    const auto e = estimate_power_median(gen, KernelFamily::gaussian, cfg, 6, &mean_gamma);
    EXPECT_EQ(e.n_run, 6u);
    // Median chord distance on the unit circle is near sqrt(2).
    EXPECT_GT(mean_gamma, 0.8);
    EXPECT_LT(mean_gamma, 2.0);
}

TEST(BandwidthSweep, CellsMatchFixedBandwidthRuns) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::cosine_perturbed(LatentDomain::circle, 0.8);
    auto gen = circle_generator(p, q, 40, 3);
    TestConfig cfg;
    cfg.n_boot = 50;
    cfg.seed = 77;
    const std::vector<double> gammas{0.25, 0.5, 1.0};
    const auto sweep = bandwidth_sweep(gen, KernelFamily::gaussian, gammas, cfg, 10);
    ASSERT_EQ(sweep.size(), 3u);
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        const auto fixed =
            estimate_power(gen, KernelSpec(KernelFamily::gaussian, gammas[g]), cfg, 10);
        EXPECT_EQ(sweep[g].gamma, gammas[g]);
        EXPECT_EQ(sweep[g].estimate.rejections, fixed.rejections) << "gamma " << gammas[g];
    }
}

TEST(BandwidthSweep, RejectsEmptyLadder) {
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    auto gen = circle_generator(p, p, 10, 3);
    TestConfig cfg;
    EXPECT_THROW(bandwidth_sweep(gen, KernelFamily::gaussian, std::vector<double>{}, cfg, 2),
                 std::invalid_argument);
}
