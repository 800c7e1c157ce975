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

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "datagen.hpp"
#include "kernels.hpp"

namespace kmmd {

// Latent-parameter quadrature rule with arc-length weights. The circle rule
// is the periodic trapezoid rule (spectrally accurate for smooth integrands);
// the arc rule is composite trapezoid with half-weight endpoints. Weights sum
// to the manifold length.
struct QuadratureGrid {
    LatentDomain domain = LatentDomain::circle;
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t n_nodes() const { return nodes.size(); }
};

inline QuadratureGrid circle_grid(std::size_t n_nodes) {
    if (n_nodes < 2) throw std::invalid_argument("circle_grid: need at least 2 nodes");
    QuadratureGrid g;
    g.domain = LatentDomain::circle;
    const double len = domain_length(g.domain);
    const double step = len / static_cast<double>(n_nodes);
    g.nodes.resize(n_nodes);
    g.weights.assign(n_nodes, step);
    for (std::size_t k = 0; k < n_nodes; ++k) g.nodes[k] = static_cast<double>(k) * step;
    return g;
}

inline QuadratureGrid arc_grid(std::size_t n_nodes) {
    if (n_nodes < 2) throw std::invalid_argument("arc_grid: need at least 2 nodes");
    QuadratureGrid g;
    g.domain = LatentDomain::arc;
    const double len = domain_length(g.domain);
    const double step = len / static_cast<double>(n_nodes - 1);
    g.nodes.resize(n_nodes);
    g.weights.assign(n_nodes, step);
    g.weights.front() = 0.5 * step;
    g.weights.back() = 0.5 * step;
    for (std::size_t k = 0; k < n_nodes; ++k) g.nodes[k] = static_cast<double>(k) * step;
    return g;
}

inline QuadratureGrid make_grid(LatentDomain domain, std::size_t n_nodes) {
    return domain == LatentDomain::circle ? circle_grid(n_nodes) : arc_grid(n_nodes);
}

namespace detail {

inline double unit_sphere_area(unsigned d) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

}  // namespace detail

// Moment constant: the integral of h(|u|^2)^power over R^d, reduced to a
// radial integral. Refuses the sinc profile: its plain profile is not
// absolutely integrable, and its square decays too slowly for the radial
// quadrature to meet the advertised tolerance.
inline double moment_m0_quadrature(KernelFamily family, int power, unsigned d) {
    if (power != 1 && power != 2)
        throw std::invalid_argument("moment_m0: power must be 1 or 2");
    if (d < 1) throw std::invalid_argument("moment_m0: dimension must be at least 1");
    if (family == KernelFamily::sinc)
        throw std::invalid_argument(
            "moment_m0: sinc profile unsupported (integrand not absolutely integrable)");
    // Integrand support: gaussian tails are below 1e-40 past r = 16;
    // sigmoid_shifted falls below 1e-30 past r = 3; indicator vanishes at
    // r = sqrt(2) and the adaptive rule resolves the jump to panel width.
    const double r_max = family == KernelFamily::gaussian ? 16.0 : 4.0;
    const auto integrand = [&](double r) {
        const double h = eval_h(family, r * r);
        const double hp = power == 1 ? h : h * h;
        return hp * std::pow(r, static_cast<double>(d - 1));
    };
    const double radial = detail::adaptive_simpson(integrand, 0.0, r_max, 1e-13);
    return detail::unit_sphere_area(d) * radial;
}

// Closed forms for the gaussian profile, quadrature for the rest.
inline double moment_m0(KernelFamily family, int power, unsigned d) {
    if (power != 1 && power != 2)
        throw std::invalid_argument("moment_m0: power must be 1 or 2");
    if (d < 1) throw std::invalid_argument("moment_m0: dimension must be at least 1");
    if (family == KernelFamily::gaussian) {
        const double base = power == 1 ? 2.0 * std::numbers::pi : std::numbers::pi;
        return std::pow(base, 0.5 * d);
    }
    return moment_m0_quadrature(family, power, d);
}

// Squared L2 distance between two densities over the grid.
inline double delta2(const LatentDensitySpec& p, const LatentDensitySpec& q,
                     const QuadratureGrid& grid) {
    if (p.domain() != q.domain() || p.domain() != grid.domain)
        throw std::invalid_argument("delta2: domain mismatch");
    std::vector<double> terms(grid.n_nodes());
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double diff = p(grid.nodes[k]) - q(grid.nodes[k]);
        terms[k] = grid.weights[k] * diff * diff;
    }
    return pairwise_sum(terms);
}

// Double quadrature of K_gamma(x, y) (p - q)(x) (p - q)(y) over the embedded
// manifold. The kernel reads chord distances, which every isometric embedding
// of the latent circle or arc shares, so no ambient dimension appears.
// Exactly symmetric in (p, q).
inline double population_T(const LatentDensitySpec& p, const LatentDensitySpec& q,
                           const KernelSpec& spec, const QuadratureGrid& grid) {
    if (p.domain() != q.domain() || p.domain() != grid.domain)
        throw std::invalid_argument("population_T: domain mismatch");
    const std::size_t n = grid.n_nodes();
    const double gamma2 = spec.bandwidth * spec.bandwidth;
    std::vector<double> cx(n), sx(n), wdiff(n);
    for (std::size_t k = 0; k < n; ++k) {
        cx[k] = std::cos(grid.nodes[k]);
        sx[k] = std::sin(grid.nodes[k]);
        wdiff[k] = grid.weights[k] * (p(grid.nodes[k]) - q(grid.nodes[k]));
    }
    std::vector<double> outer(n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double dc = cx[i] - cx[j];
            const double ds = sx[i] - sx[j];
            row[j] = eval_h(spec.family, (dc * dc + ds * ds) / gamma2) * wdiff[j];
        }
        outer[i] = wdiff[i] * pairwise_sum(row);
    }
    return pairwise_sum(outer);
}

struct KernelIntegralCheck {
    double approx = 0.0;
    double reference = 0.0;

    double error() const { return std::abs(approx - reference); }
};

// Compares gamma^{-d} * integral of K_gamma(x, .) f against the moment-constant
// limit m0[h] f(x) at a single latent point, on the closed circle (d = 1).
// The arc is refused: near a boundary the kernel integral has a different
// limit, which this check does not model.
inline KernelIntegralCheck kernel_integral_check(const std::function<double(double)>& f,
                                                 double x, const KernelSpec& spec,
                                                 const QuadratureGrid& grid) {
    if (grid.domain != LatentDomain::circle)
        throw std::invalid_argument("kernel_integral_check: closed circle only");
    const double gamma2 = spec.bandwidth * spec.bandwidth;
    const double cx = std::cos(x);
    const double sx = std::sin(x);
    std::vector<double> terms(grid.n_nodes());
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double dc = cx - std::cos(grid.nodes[k]);
        const double ds = sx - std::sin(grid.nodes[k]);
        terms[k] =
            grid.weights[k] * eval_h(spec.family, (dc * dc + ds * ds) / gamma2) * f(grid.nodes[k]);
    }
    KernelIntegralCheck out;
    out.approx = pairwise_sum(terms) / spec.bandwidth;
    out.reference = moment_m0(spec.family, 1, 1) * f(x);
    return out;
}

}  // namespace kmmd
