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
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "oracle.hpp"
#include "testing.hpp"

namespace kmmd {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), end);
}

// Draws one two-sample replica for a fixed experiment configuration. Curve
// manifolds embed latent angles directly; image manifolds render a rotated
// glyph per angle. Noise is always applied in ambient units, for images that
// means pixel units before any normalization.
class DataPipeline {
public:
    explicit DataPipeline(const ExperimentConfig& cfg)
        : manifold_(cfg.manifold),
          noise_(cfg.noise),
          p_(cfg.density_p.build(cfg.latent_domain())),
          q_(cfg.density_q.build(cfg.latent_domain())),
          n_x_(cfg.n_x),
          n_y_(cfg.n_y) {
        if (manifold_.shape == ManifoldShape::rotated_image) {
            if (cfg.glyph_file.empty()) {
                glyph_ = synthetic_glyph();
            } else {
                auto images = load_idx_images(cfg.glyph_file);
                if (images.empty())
                    throw std::runtime_error("glyph file '" + cfg.glyph_file +
                                             "' holds no images");
                glyph_ = std::move(images.front());
            }
        }
    }

    // Noise-free embedding of latent angles; used for witness query points.
    Matrix embed(std::span<const double> latents) const {
        if (manifold_.shape != ManifoldShape::rotated_image)
            return embed_circle(latents, manifold_);
        const unsigned w = manifold_.resolution;
        Matrix out(latents.size(), static_cast<std::size_t>(w) * w);
        for (std::size_t i = 0; i < latents.size(); ++i) {
            const auto pixels =
                render_rotated_image(glyph_, latents[i], w, manifold_.normalize);
            std::copy(pixels.begin(), pixels.end(), out.row(i).begin());
        }
        return out;
    }

    TwoSampleData operator()(std::uint64_t replica_seed) const {
        RngStream latent_x(derive_seed(replica_seed, "latent-x"));
        RngStream latent_y(derive_seed(replica_seed, "latent-y"));
        RngStream noise_x(derive_seed(replica_seed, "noise-x"));
        RngStream noise_y(derive_seed(replica_seed, "noise-y"));
        const auto theta_x = sample_latent(p_, n_x_, latent_x);
        const auto theta_y = sample_latent(q_, n_y_, latent_y);

        TwoSampleData data;
        if (manifold_.shape != ManifoldShape::rotated_image) {
            data.x = add_gaussian_noise(embed_circle(theta_x, manifold_), noise_, noise_x);
            data.y = add_gaussian_noise(embed_circle(theta_y, manifold_), noise_, noise_y);
        } else {
            data.x = render_sample(theta_x, noise_x);
            data.y = render_sample(theta_y, noise_y);
        }
        data.validate();
        return data;
    }

    const Matrix& glyph() const { return glyph_; }

private:
    // Raw-pixel render, noise in pixel units, then the optional 1/W scale.
    Matrix render_sample(const std::vector<double>& latents, RngStream& rng) const {
        const unsigned w = manifold_.resolution;
        Matrix raw(latents.size(), static_cast<std::size_t>(w) * w);
        for (std::size_t i = 0; i < latents.size(); ++i) {
            const auto pixels = render_rotated_image(glyph_, latents[i], w, false);
            std::copy(pixels.begin(), pixels.end(), raw.row(i).begin());
        }
        Matrix noisy = add_gaussian_noise(raw, noise_, rng);
        if (manifold_.normalize) {
            const double scale = 1.0 / static_cast<double>(w);
            for (double& v : noisy.data()) v *= scale;
        }
        return noisy;
    }

    ManifoldSpec manifold_;
    NoiseSpec noise_;
    LatentDensitySpec p_;
    LatentDensitySpec q_;
    std::size_t n_x_;
    std::size_t n_y_;
    Matrix glyph_;
};

// One calibrated test on replica 0 of the configured seed chain. The record
// matches what a power replica with index 0 would have computed.
struct TestRecord {
    double statistic = 0.0;
    double threshold = 0.0;
    bool reject = false;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
};

inline TestRecord run_single_test(const ExperimentConfig& cfg) {
    const DataPipeline pipeline(cfg);
    const TwoSampleData data = pipeline(derive_seed(cfg.seed, "replica", 0));
    const auto dists = compute_squared_distances(data, cfg.n_threads);
    const double gamma = cfg.kernel.median ? median_distance_bandwidth(dists)
                                           : cfg.kernel.bandwidth;
    const KernelSpec spec(cfg.kernel.family, gamma);
    const auto k = build_kernel_matrix(spec, dists, cfg.n_threads);

    TestConfig tc;
    tc.alpha_level = cfg.alpha_level;
    tc.n_boot = cfg.n_boot;
    tc.seed = derive_seed(cfg.seed, "boot-replica", 0);
    tc.statistic_variant = cfg.statistic_variant;
    tc.n_threads = cfg.n_threads;

    TestRecord rec;
    rec.statistic = observed_statistic(spec, data, k, cfg.statistic_variant);
    rec.threshold = bootstrap_threshold(k, tc).threshold;
    rec.reject = rec.statistic > rec.threshold;
    rec.gamma = gamma;
    rec.seed = cfg.seed;
    rec.n_x = cfg.n_x;
    rec.n_y = cfg.n_y;
    return rec;
}

inline nlohmann::json to_json(const TestRecord& rec) {
    nlohmann::json j;
    j["statistic"] = rec.statistic;
    j["threshold"] = rec.threshold;
    j["reject"] = rec.reject;
    j["gamma"] = rec.gamma;
    j["seed"] = rec.seed;
    j["n_X"] = rec.n_x;
    j["n_Y"] = rec.n_y;
    return j;
}

// One power-table cell: m is the ambient dimension (pixel count for images).
struct PowerRow {
    std::size_t m = 0;
    double gamma = 0.0;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    double sigma = 0.0;
    PowerEstimate estimate;
    std::size_t n_run = 0;
    std::uint64_t seed = 0;
};

// Rows follow config order: for each ambient size, the sweep bandwidths in
// the listed order, then the median-rule row when the base bandwidth is
// "median", or the single fixed-bandwidth row when no sweep is given.
inline std::vector<PowerRow> power_table(const ExperimentConfig& cfg) {
    const bool images = cfg.manifold.shape == ManifoldShape::rotated_image;
    std::vector<std::size_t> sizes;
    if (images) {
        if (cfg.resolutions.empty())
            sizes.push_back(cfg.manifold.resolution);
        else
            for (unsigned w : cfg.resolutions) sizes.push_back(w);
    } else {
        if (cfg.ambient_dims.empty())
            sizes.push_back(cfg.manifold.ambient_dim);
        else
            sizes = cfg.ambient_dims;
    }

    TestConfig tc;
    tc.alpha_level = cfg.alpha_level;
    tc.n_boot = cfg.n_boot;
    tc.seed = cfg.seed;
    tc.statistic_variant = cfg.statistic_variant;
    tc.n_threads = cfg.n_threads;

    std::vector<PowerRow> rows;
    for (std::size_t size : sizes) {
        ExperimentConfig local = cfg;
        if (images)
            local.manifold.resolution = static_cast<unsigned>(size);
        else
            local.manifold.ambient_dim = size;
        const DataPipeline pipeline(local);
        const std::size_t m = images ? size * size : size;

        const auto push = [&](double gamma, const PowerEstimate& est) {
            PowerRow row;
            row.m = m;
            row.gamma = gamma;
            row.n_x = cfg.n_x;
            row.n_y = cfg.n_y;
            row.sigma = cfg.noise.sigma;
            row.estimate = est;
            row.n_run = cfg.n_run;
            row.seed = cfg.seed;
            rows.push_back(row);
        };

        if (!cfg.kernel.sweep.empty()) {
            const auto cells =
                bandwidth_sweep(pipeline, cfg.kernel.family, cfg.kernel.sweep, tc, cfg.n_run);
            for (const auto& cell : cells) push(cell.gamma, cell.estimate);
        }
        if (cfg.kernel.median) {
            double mean_bandwidth = 0.0;
            const auto est = estimate_power_median(pipeline, cfg.kernel.family, tc,
                                                   cfg.n_run, &mean_bandwidth);
            push(mean_bandwidth, est);
        } else if (cfg.kernel.sweep.empty()) {
            const KernelSpec spec(cfg.kernel.family, cfg.kernel.bandwidth);
            push(cfg.kernel.bandwidth, estimate_power(pipeline, spec, tc, cfg.n_run));
        }
    }
    return rows;
}

inline std::string power_csv(const std::vector<PowerRow>& rows) {
    std::string out = "m,gamma,n_x,n_y,sigma,power,ci_low,ci_high,n_run,seed\n";
    for (const auto& r : rows) {
        out += std::to_string(r.m);
        out += ',';
        out += format_double(r.gamma);
        out += ',';
        out += std::to_string(r.n_x);
        out += ',';
        out += std::to_string(r.n_y);
        out += ',';
        out += format_double(r.sigma);
        out += ',';
        out += format_double(r.estimate.power);
        out += ',';
        out += format_double(r.estimate.ci_low);
        out += ',';
        out += format_double(r.estimate.ci_high);
        out += ',';
        out += std::to_string(r.n_run);
        out += ',';
        out += std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

// Quadrature ladder for the population statistic on the circle: the value,
// its ratio to the small-bandwidth law gamma * m0 * delta2, and the
// single-point kernel integral errors whose decay checks the moment
// expansion. NaN marks table cells with no defined value.
struct OracleRow {
    double gamma = 0.0;
    double population_t = 0.0;
    double limit_ratio = std::numeric_limits<double>::quiet_NaN();
    double err_const = 0.0;
    double err_cos = 0.0;
    double err_ratio_const = std::numeric_limits<double>::quiet_NaN();
    double err_ratio_cos = std::numeric_limits<double>::quiet_NaN();
};

struct OracleReport {
    std::vector<OracleRow> rows;
    double delta2 = 0.0;
    double m0 = 0.0;
    bool monotone_ok = true;  // |ratio - 1| nonincreasing down the ladder
};

inline OracleReport oracle_report(const ExperimentConfig& cfg) {
    if (cfg.manifold.shape != ManifoldShape::circle)
        throw std::invalid_argument(
            "oracle report: only the circle manifold is supported");
    if (cfg.oracle_grid_nodes < 64)
        std::cerr << "warning: " << cfg.oracle_grid_nodes
                  << " grid nodes; quadrature error will dominate the ladder\n";

    const auto grid = circle_grid(cfg.oracle_grid_nodes);
    const auto p = cfg.density_p.build(LatentDomain::circle);
    const auto q = cfg.density_q.build(LatentDomain::circle);

    OracleReport report;
    report.delta2 = delta2(p, q, grid);
    report.m0 = moment_m0(cfg.kernel.family, 1, 1);
    const bool ratio_defined = report.delta2 > 1e-15;

    const auto one = [](double) { return 1.0; };
    const auto cosine = [](double t) { return std::cos(t); };
    double prev_deviation = std::numeric_limits<double>::infinity();
    for (double gamma : cfg.oracle_gammas) {
        const KernelSpec spec(cfg.kernel.family, gamma);
        OracleRow row;
        row.gamma = gamma;
        row.population_t = population_T(p, q, spec, grid);
        row.err_const = kernel_integral_check(one, 0.0, spec, grid).error();
        row.err_cos = kernel_integral_check(cosine, 0.7, spec, grid).error();
        if (!report.rows.empty()) {
            const auto& last = report.rows.back();
            if (row.err_const > 0.0) row.err_ratio_const = last.err_const / row.err_const;
            if (row.err_cos > 0.0) row.err_ratio_cos = last.err_cos / row.err_cos;
        }
        if (ratio_defined) {
            row.limit_ratio = row.population_t / (gamma * report.m0 * report.delta2);
            const double deviation = std::abs(row.limit_ratio - 1.0);
            if (deviation > prev_deviation + 1e-12) report.monotone_ok = false;
            prev_deviation = deviation;
        }
        report.rows.push_back(row);
    }
    return report;
}

inline std::string oracle_csv(const OracleReport& report) {
    std::string out =
        "gamma,population_t,limit_ratio,err_const,err_cos,err_ratio_const,err_ratio_cos\n";
    for (const auto& r : report.rows) {
        out += format_double(r.gamma);
        out += ',';
        out += format_double(r.population_t);
        out += ',';
        out += format_double(r.limit_ratio);
        out += ',';
        out += format_double(r.err_const);
        out += ',';
        out += format_double(r.err_cos);
        out += ',';
        out += format_double(r.err_ratio_const);
        out += ',';
        out += format_double(r.err_ratio_cos);
        out += '\n';
    }
    return out;
}

// Witness profile of replica 0 over a uniform latent grid. Positive values
// mark regions where the second sample is locally denser.
struct WitnessTable {
    std::vector<double> theta;
    std::vector<double> value;
};

inline WitnessTable witness_table(const ExperimentConfig& cfg) {
    const DataPipeline pipeline(cfg);
    const TwoSampleData data = pipeline(derive_seed(cfg.seed, "replica", 0));

    const double length = domain_length(cfg.latent_domain());
    const std::size_t grid = cfg.witness_grid;
    WitnessTable table;
    table.theta.reserve(grid);
    if (grid == 1) {
        table.theta.push_back(0.0);
    } else if (cfg.latent_domain() == LatentDomain::circle) {
        for (std::size_t j = 0; j < grid; ++j)
            table.theta.push_back(static_cast<double>(j) * length /
                                  static_cast<double>(grid));
    } else {
        for (std::size_t j = 0; j < grid; ++j)
            table.theta.push_back(static_cast<double>(j) * length /
                                  static_cast<double>(grid - 1));
    }

    const Matrix queries = pipeline.embed(table.theta);
    const double gamma = cfg.kernel.median ? median_distance_bandwidth(data)
                                           : cfg.kernel.bandwidth;
    const KernelSpec spec(cfg.kernel.family, gamma);
    table.value = witness(spec, data, queries);
    return table;
}

inline std::string witness_csv(const WitnessTable& table) {
    std::string out = "theta,witness\n";
    for (std::size_t i = 0; i < table.theta.size(); ++i) {
        out += format_double(table.theta[i]);
        out += ',';
        out += format_double(table.value[i]);
        out += '\n';
    }
    return out;
}

}  // namespace kmmd
