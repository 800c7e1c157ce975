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

// End-to-end acceptance gate. Each check prints one PASS/FAIL line; the
// process exits nonzero if any check fails. Checks that need the frozen
// benchmark settings read them from KMMD_CONFIG_DIR.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <kmmd/experiment.hpp>

namespace {

using kmmd::KernelFamily;
using kmmd::KernelSpec;
using kmmd::LatentDensitySpec;
using kmmd::LatentDomain;
using kmmd::Matrix;
using kmmd::StatisticVariant;
using kmmd::TwoSampleData;

std::string config_file(const char* name) {
    return std::string(KMMD_CONFIG_DIR) + "/" + name;
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& why) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += why;
        }
    }
};

std::string fmt(double v) { return kmmd::format_double(v); }

// ---------------------------------------------------------------- checks

// Moment constants of the gaussian profile: closed forms and quadrature.
Outcome check_gaussian_moments() {
    Outcome o;
    for (std::size_t d = 1; d <= 3; ++d) {
        const double half_d = static_cast<double>(d) / 2.0;
        const double closed1 = kmmd::moment_m0(KernelFamily::gaussian, 1, d);
        const double closed2 = kmmd::moment_m0(KernelFamily::gaussian, 2, d);
        o.require(std::abs(closed1 - std::pow(2.0 * std::numbers::pi, half_d)) < 1e-12,
                  "closed form p=1 d=" + std::to_string(d));
        o.require(std::abs(closed2 - std::pow(std::numbers::pi, half_d)) < 1e-12,
                  "closed form p=2 d=" + std::to_string(d));
        const double quad1 = kmmd::moment_m0_quadrature(KernelFamily::gaussian, 1, d);
        const double quad2 = kmmd::moment_m0_quadrature(KernelFamily::gaussian, 2, d);
        o.require(std::abs(quad1 - closed1) < 1e-8,
                  "quadrature p=1 d=" + std::to_string(d) + " off by " +
                      fmt(std::abs(quad1 - closed1)));
        o.require(std::abs(quad2 - closed2) < 1e-8,
                  "quadrature p=2 d=" + std::to_string(d) + " off by " +
                      fmt(std::abs(quad2 - closed2)));
    }
    return o;
}

// Small-bandwidth limit of the population statistic on the circle.
Outcome check_population_limit() {
    Outcome o;
    const auto grid = kmmd::circle_grid(1024);
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::cosine_perturbed(LatentDomain::circle, 0.5);
    const double d2 = kmmd::delta2(p, q, grid);
    const double analytic = 0.25 / (4.0 * std::numbers::pi);
    o.require(std::abs(d2 - analytic) < 1e-9,
              "delta2 " + fmt(d2) + " vs analytic " + fmt(analytic));
    const double m0 = kmmd::moment_m0(KernelFamily::gaussian, 1, 1);

    double prev_deviation = std::numeric_limits<double>::infinity();
    double last_ratio = 0.0;
    for (double gamma : {0.4, 0.2, 0.1, 0.05}) {
        const KernelSpec spec(KernelFamily::gaussian, gamma);
        const double t = kmmd::population_T(p, q, spec, grid);
        last_ratio = t / (gamma * m0 * d2);
        const double deviation = std::abs(last_ratio - 1.0);
        o.require(deviation <= prev_deviation + 1e-12,
                  "deviation grew at gamma=" + fmt(gamma));
        prev_deviation = deviation;
    }
    o.require(std::abs(last_ratio - 1.0) < 0.05,
              "ratio at gamma=0.05 is " + fmt(last_ratio));
    return o;
}

// Error of the single-point kernel integral shrinks at the squared rate.
Outcome check_kernel_integral_rate() {
    Outcome o;
    const auto grid = kmmd::circle_grid(1024);
    const auto check_fn = [&](std::function<double(double)> f, double x,
                              const char* label) {
        const double e2 =
            kmmd::kernel_integral_check(f, x, KernelSpec(KernelFamily::gaussian, 0.2), grid)
                .error();
        const double e1 =
            kmmd::kernel_integral_check(f, x, KernelSpec(KernelFamily::gaussian, 0.1), grid)
                .error();
        const double ratio = e2 / e1;
        o.require(ratio >= 3.0 && ratio <= 5.0,
                  std::string(label) + " ratio " + fmt(ratio));
    };
    check_fn([](double) { return 1.0; }, 0.0, "constant");
    check_fn([](double t) { return std::cos(t); }, 0.7, "cosine");
    return o;
}

// Rejection rate under the null stays near the nominal level.
Outcome check_level_control() {
    Outcome o;
    kmmd::ExperimentConfig cfg;
    cfg.manifold.shape = kmmd::ManifoldShape::circle;
    cfg.manifold.ambient_dim = 20;
    cfg.n_x = 200;
    cfg.n_y = 200;
    const kmmd::DataPipeline pipeline(cfg);

    kmmd::TestConfig tc;
    tc.alpha_level = 0.05;
    tc.n_boot = 300;
    tc.seed = 20260816;
    const auto est =
        kmmd::estimate_power(pipeline, KernelSpec(KernelFamily::gaussian, 0.3), tc, 500);
    o.require(est.power >= 0.03 && est.power <= 0.08,
              "rejection rate " + fmt(est.power) + " outside [0.03, 0.08]");
    return o;
}

// Index-relabeled permutation statistics equal direct recomputation on
// physically permuted arrays.
Outcome check_permutation_oracle() {
    Outcome o;
    kmmd::ExperimentConfig cfg;
    cfg.manifold.shape = kmmd::ManifoldShape::circle;
    cfg.manifold.ambient_dim = 3;
    cfg.density_q.family = kmmd::LatentFamily::cosine_perturbed;
    cfg.density_q.epsilon = 0.6;
    cfg.noise.sigma = 0.1;
    cfg.n_x = 30;
    cfg.n_y = 30;
    const kmmd::DataPipeline pipeline(cfg);
    const TwoSampleData data = pipeline(kmmd::derive_seed(9, "replica", 0));
    const KernelSpec spec(KernelFamily::gaussian, 0.5);
    const auto k = kmmd::build_kernel_matrix(spec, data);

    kmmd::RngStream perm_rng(424242);
    const std::size_t n = data.pooled_size();
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto order = kmmd::random_permutation(n, perm_rng);
        TwoSampleData shuffled;
        shuffled.x = Matrix(data.n_x(), data.ambient_dim());
        shuffled.y = Matrix(data.n_y(), data.ambient_dim());
        for (std::size_t i = 0; i < n; ++i) {
            const auto src = data.pooled_row(order[i]);
            auto dst = i < data.n_x() ? shuffled.x.row(i)
                                      : shuffled.y.row(i - data.n_x());
            std::copy(src.begin(), src.end(), dst.begin());
        }
        const auto k_shuffled = kmmd::build_kernel_matrix(spec, shuffled);
        for (auto variant : {StatisticVariant::biased, StatisticVariant::unbiased}) {
            const double relabeled = kmmd::relabeled_statistic(k, variant, order);
            const double direct =
                kmmd::observed_statistic(spec, shuffled, k_shuffled, variant);
            worst = std::max(worst, std::abs(relabeled - direct));
        }
    }
    o.require(worst < 1e-12, "worst mismatch " + fmt(worst));
    return o;
}

// Identical latent draws embedded into different ambient dimensions give
// the same kernel matrices, statistics, thresholds, and decisions.
Outcome check_ambient_invariance() {
    Outcome o;
    const auto p = LatentDensitySpec::uniform(LatentDomain::circle);
    const auto q = LatentDensitySpec::cosine_perturbed(LatentDomain::circle, 0.5);
    kmmd::RngStream rx(101);
    kmmd::RngStream ry(202);
    const auto theta_x = kmmd::sample_latent(p, 80, rx);
    const auto theta_y = kmmd::sample_latent(q, 80, ry);
    const KernelSpec spec(KernelFamily::gaussian, 0.5);
    kmmd::TestConfig tc;
    tc.n_boot = 200;
    tc.seed = 7;

    std::vector<double> stats, thresholds;
    std::vector<bool> decisions;
    std::vector<std::vector<double>> matrices;
    for (std::size_t m : {std::size_t{3}, std::size_t{50}, std::size_t{500}}) {
        kmmd::ManifoldSpec manifold;
        manifold.shape = kmmd::ManifoldShape::circle;
        manifold.ambient_dim = m;
        manifold.embedding_seed = 17;
        TwoSampleData data;
        data.x = kmmd::embed_circle(theta_x, manifold);
        data.y = kmmd::embed_circle(theta_y, manifold);
        const auto k = kmmd::build_kernel_matrix(spec, data);
        const auto outcome = kmmd::run_test(spec, data, tc);
        matrices.push_back(k.values.data());
        stats.push_back(outcome.statistic);
        thresholds.push_back(outcome.threshold);
        decisions.push_back(outcome.reject);
    }
    for (std::size_t i = 1; i < matrices.size(); ++i) {
        double worst = 0.0;
        for (std::size_t e = 0; e < matrices[i].size(); ++e)
            worst = std::max(worst, std::abs(matrices[i][e] - matrices[0][e]));
        o.require(worst < 1e-9, "kernel matrix drift " + fmt(worst));
        o.require(std::abs(stats[i] - stats[0]) < 1e-9, "statistic drift");
        o.require(std::abs(thresholds[i] - thresholds[0]) < 1e-9, "threshold drift");
        o.require(decisions[i] == decisions[0], "decision flip");
    }
    return o;
}

// Power grows with sample size and reaches 0.8 on the frozen benchmark.
Outcome check_power_consistency() {
    Outcome o;
    auto cfg = kmmd::load_config_file(config_file("circle_benchmark.ini"));
    cfg.kernel.median = false;  // sweep rows only
    cfg.kernel.bandwidth = cfg.kernel.sweep.front();

    const auto best_row = [](const std::vector<kmmd::PowerRow>& rows) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].estimate.power > rows[best].estimate.power) best = i;
        return rows[best];
    };

    const auto rows_small = kmmd::power_table(cfg);
    cfg.n_x = 800;
    cfg.n_y = 800;
    const auto rows_large = kmmd::power_table(cfg);
    o.require(rows_small.size() == 5 && rows_large.size() == 5, "unexpected row count");

    const auto small = best_row(rows_small);
    const auto large = best_row(rows_large);
    o.require(small.estimate.ci_low <= large.estimate.ci_high,
              "power(n=100)=" + fmt(small.estimate.power) +
                  " not below power(n=800)=" + fmt(large.estimate.power) +
                  " within confidence bounds");
    bool reaches = false;
    for (const auto& row : rows_large)
        if (row.estimate.power >= 0.8) reaches = true;
    o.require(reaches, "no bandwidth reaches power 0.8 at n=800");
    return o;
}

// On the image benchmark some bandwidth below the median-distance rule
// performs at least as well as the rule itself, up to CI width.
Outcome check_small_bandwidth_advantage() {
    Outcome o;
    const auto cfg = kmmd::load_config_file(config_file("image_benchmark.ini"));
    const auto rows = kmmd::power_table(cfg);
    o.require(rows.size() == cfg.kernel.sweep.size() + 1, "unexpected row count");
    const auto& median_row = rows.back();
    const double half_width =
        (median_row.estimate.ci_high - median_row.estimate.ci_low) / 2.0;
    const double floor = median_row.estimate.power - half_width;
    bool found = false;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        if (rows[i].gamma < median_row.gamma && rows[i].estimate.power >= floor) {
            found = true;
            break;
        }
    }
    o.require(found, "no sweep bandwidth below " + fmt(median_row.gamma) +
                         " reaches power " + fmt(floor));
    return o;
}

// Pixel noise at the baseline per-pixel bandwidth barely moves the power.
Outcome check_noise_robustness() {
    Outcome o;
    const auto clean_cfg = kmmd::load_config_file(config_file("image_benchmark.ini"));
    const auto noisy_cfg =
        kmmd::load_config_file(config_file("image_noise_benchmark.ini"));
    const auto clean = kmmd::power_table(clean_cfg);
    const auto noisy = kmmd::power_table(noisy_cfg);
    o.require(clean.size() == noisy.size(), "row count mismatch");

    std::size_t best = 0;
    for (std::size_t i = 1; i + 1 < noisy.size(); ++i)  // sweep rows only
        if (noisy[i].estimate.power > noisy[best].estimate.power) best = i;
    const double gap =
        std::abs(noisy[best].estimate.power - clean[best].estimate.power);
    o.require(clean[best].gamma == noisy[best].gamma, "bandwidth rows diverged");
    o.require(gap <= 0.15, "power gap " + fmt(gap) + " at gamma " +
                               fmt(noisy[best].gamma));
    return o;
}

// The linear-time statistic is unbiased for the population value and its
// cost scales linearly in the sample size.
Outcome check_linear_statistic() {
    Outcome o;
    auto cfg = kmmd::load_config_file(config_file("circle_benchmark.ini"));
    cfg.n_x = 100;
    cfg.n_y = 100;
    const kmmd::DataPipeline pipeline(cfg);
    const KernelSpec spec(KernelFamily::gaussian, 0.5);

    const auto grid = kmmd::circle_grid(2048);
    const auto p = cfg.density_p.build(LatentDomain::circle);
    const auto q = cfg.density_q.build(LatentDomain::circle);
    const double target = kmmd::population_T(p, q, spec, grid);

    const std::size_t n_rep = 2000;
    std::vector<double> values(n_rep);
    for (std::size_t i = 0; i < n_rep; ++i) {
        const auto data = pipeline(kmmd::derive_seed(cfg.seed, "replica", i));
        values[i] = kmmd::mmd_linear(spec, data).value;
    }
    const double mean = kmmd::pairwise_sum(values) / static_cast<double>(n_rep);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(n_rep - 1)) /
                      std::sqrt(static_cast<double>(n_rep));
    o.require(std::abs(mean - target) <= 3.0 * se,
              "mean " + fmt(mean) + " vs population " + fmt(target) +
                  " exceeds 3 SE = " + fmt(3.0 * se));

    // Wall clock for one evaluation at n and 2n, best of five trials.
    const auto time_linear = [&](std::size_t n_half) {
        kmmd::ExperimentConfig big = cfg;
        big.n_x = n_half;
        big.n_y = n_half;
        const kmmd::DataPipeline gen(big);
        const auto data = gen(kmmd::derive_seed(1, "replica", 0));
        double sink = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (int trial = 0; trial < 5; ++trial) {
            const auto start = std::chrono::steady_clock::now();
            for (int rep = 0; rep < 40; ++rep)
                sink += kmmd::mmd_linear(spec, data).value;
            const auto stop = std::chrono::steady_clock::now();
            best = std::min(best,
                            std::chrono::duration<double>(stop - start).count());
        }
        if (sink == 42.0) std::fprintf(stderr, "unlikely\n");
        return best;
    };
    const double t_small = time_linear(10000);
    const double t_big = time_linear(20000);
    const double ratio = t_big / t_small;
    o.require(ratio >= 1.6 && ratio <= 2.6,
              "doubling cost ratio " + fmt(ratio) + " outside [1.6, 2.6]");
    return o;
}

// Witness sign matches the sign of q - p away from its zero crossings.
Outcome check_witness_sign_map() {
    Outcome o;
    auto cfg = kmmd::load_config_file(config_file("witness_default.ini"));
    double total_agreement = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        cfg.seed = seed;
        const auto table = kmmd::witness_table(cfg);
        std::vector<double> gap(table.theta.size());
        for (std::size_t i = 0; i < gap.size(); ++i)
            gap[i] = std::abs(std::cos(table.theta[i]));
        auto sorted = gap;
        std::sort(sorted.begin(), sorted.end());
        const double cutoff = sorted[sorted.size() / 5];
        std::size_t qualifying = 0;
        std::size_t agree = 0;
        for (std::size_t i = 0; i < gap.size(); ++i) {
            if (gap[i] <= cutoff) continue;
            ++qualifying;
            if (table.value[i] * std::cos(table.theta[i]) > 0.0) ++agree;
        }
        total_agreement +=
            static_cast<double>(agree) / static_cast<double>(qualifying);
    }
    const double mean_agreement = total_agreement / 20.0;
    o.require(mean_agreement >= 0.9,
              "mean sign agreement " + fmt(mean_agreement) + " below 0.9");
    return o;
}

// The concentration constant and the threshold's decay in n.
Outcome check_threshold_formula() {
    Outcome o;
    const double lambda = kmmd::concentration_lambda(0.05);
    o.require(std::abs(lambda - 5.723177133181953637) < 1e-12,
              "lambda " + fmt(lambda));
    kmmd::ThresholdParams params;
    params.rho_x = 0.5;
    params.rho_max = 1.0 / (2.0 * std::numbers::pi);
    params.intrinsic_dim = 1;
    params.gamma = 0.1;
    params.alpha_level = 0.05;
    const double m0_h2 = std::sqrt(std::numbers::pi);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {100, 316, 1000, 3162, 10000, 31623, 100000}) {
        params.n = n;
        const double thr = kmmd::theoretical_threshold(params, m0_h2);
        o.require(thr < prev, "threshold not decreasing at n=" + std::to_string(n));
        prev = thr;
    }
    return o;
}

}  // namespace

int main() {
    struct Check {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Check> checks{
        {"gaussian moment constants, closed form and quadrature",
         check_gaussian_moments},
        {"population statistic approaches its small-bandwidth limit",
         check_population_limit},
        {"kernel integral error decays at the squared-bandwidth rate",
         check_kernel_integral_rate},
        {"rejection rate under the null stays near the nominal level",
         check_level_control},
        {"relabeled permutation statistics match physical permutation",
         check_permutation_oracle},
        {"results are invariant to the ambient embedding dimension",
         check_ambient_invariance},
        {"power grows with sample size on the circle benchmark",
         check_power_consistency},
        {"a bandwidth below the median rule matches it on images",
         check_small_bandwidth_advantage},
        {"pixel noise at the baseline bandwidth barely moves power",
         check_noise_robustness},
        {"linear statistic is unbiased and costs linear time",
         check_linear_statistic},
        {"witness sign map matches the density difference",
         check_witness_sign_map},
        {"threshold constant and monotone decay in sample size",
         check_threshold_formula},
    };

    int failures = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = checks[i].run();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        std::printf("%s  %2zu/%zu  %s (%.1fs)%s%s\n", outcome.pass ? "PASS" : "FAIL",
                    i + 1, checks.size(), checks[i].name, seconds,
                    outcome.detail.empty() ? "" : " -- ", outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
