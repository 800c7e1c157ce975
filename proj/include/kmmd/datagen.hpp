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
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace kmmd {

enum class LatentDomain { circle, arc };

inline double domain_length(LatentDomain d) {
    return d == LatentDomain::circle ? 2.0 * std::numbers::pi : 0.5 * std::numbers::pi;
}

inline std::string_view to_string(LatentDomain d) {
    return d == LatentDomain::circle ? "circle" : "arc";
}

enum class LatentFamily { uniform, cosine_perturbed, piecewise_bump };

inline std::string_view to_string(LatentFamily f) {
    switch (f) {
        case LatentFamily::uniform: return "uniform";
        case LatentFamily::cosine_perturbed: return "cosine_perturbed";
        case LatentFamily::piecewise_bump: return "piecewise_bump";
    }
    throw std::logic_error("unknown latent family");
}

inline LatentFamily latent_family_from_string(std::string_view name) {
    if (name == "uniform") return LatentFamily::uniform;
    if (name == "cosine_perturbed") return LatentFamily::cosine_perturbed;
    if (name == "piecewise_bump") return LatentFamily::piecewise_bump;
    throw std::invalid_argument("unknown latent family '" + std::string(name) +
                                "' (expected uniform, cosine_perturbed or piecewise_bump)");
}

// Declared regularity of a density, not inferred from it. All built-in
// families are Lipschitz, so the Holder order is 1 with a hand-derived
// constant bound.
struct DensityMetadata {
    double holder_order = 1.0;
    double holder_constant = 0.0;
    double density_max = 0.0;
};

namespace detail {

// Adaptive Simpson with Richardson correction. Splits until the local
// estimate is stable or the depth budget runs out; depth exhaustion returns
// the corrected estimate, which near an isolated jump is accurate to the
// width of the last panel.
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int max_depth = 52) {
    if (!(b > a)) return 0.0;
    const double fa = f(a);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace detail

// A normalized density on the circle [0, 2pi) or the arc [0, pi/2], with
// declared regularity metadata. Construction checks normalization by
// quadrature over the smooth pieces.
class LatentDensitySpec {
public:
    // Default-constructed specs already describe the uniform circle law.
    LatentDensitySpec() {
        metadata_.holder_order = 1.0;
        metadata_.holder_constant = 0.0;
        metadata_.density_max = 1.0 / norm_;
    }

    static LatentDensitySpec uniform(LatentDomain domain) { return make_uniform(domain); }

    // (1 + epsilon cos(frequency theta)) / Z. frequency = 0 picks the domain
    // default: 1 on the circle, 4 on the arc.
    static LatentDensitySpec cosine_perturbed(LatentDomain domain, double epsilon,
                                              unsigned frequency = 0) {
        if (!(epsilon >= 0.0) || !(epsilon < 1.0))
            throw std::invalid_argument("cosine_perturbed: epsilon must lie in [0, 1)");
        LatentDensitySpec spec;
        spec.family_ = LatentFamily::cosine_perturbed;
        spec.domain_ = domain;
        spec.epsilon_ = epsilon;
        spec.frequency_ = frequency != 0 ? frequency
                          : domain == LatentDomain::circle ? 1u
                                                           : 4u;
        const double len = domain_length(domain);
        const double k = static_cast<double>(spec.frequency_);
        // Integral of cos(k theta) over the domain; exactly zero over a full
        // period of an integer frequency.
        const double cos_integral =
            domain == LatentDomain::circle ? 0.0 : std::sin(k * len) / k;
        spec.norm_ = len + epsilon * cos_integral;
        spec.metadata_.holder_order = 1.0;
        spec.metadata_.holder_constant = epsilon * k / spec.norm_;
        spec.metadata_.density_max = (1.0 + epsilon) / spec.norm_;
        spec.check_normalization();
        return spec;
    }

    // (1 + amplitude * tent(theta)) / Z with a triangular bump of the given
    // center and half-width, contained in the domain.
    static LatentDensitySpec piecewise_bump(LatentDomain domain, double center,
                                            double half_width, double amplitude) {
        const double len = domain_length(domain);
        if (!(half_width > 0.0))
            throw std::invalid_argument("piecewise_bump: half_width must be positive");
        if (!(amplitude > -1.0) || !std::isfinite(amplitude))
            throw std::invalid_argument("piecewise_bump: amplitude must exceed -1");
        if (!(center - half_width >= 0.0) || !(center + half_width <= len))
            throw std::invalid_argument("piecewise_bump: bump must lie inside the domain");
        LatentDensitySpec spec;
        spec.family_ = LatentFamily::piecewise_bump;
        spec.domain_ = domain;
        spec.center_ = center;
        spec.half_width_ = half_width;
        spec.amplitude_ = amplitude;
        spec.norm_ = len + amplitude * half_width;
        spec.metadata_.holder_order = 1.0;
        spec.metadata_.holder_constant = std::abs(amplitude) / (half_width * spec.norm_);
        spec.metadata_.density_max = (1.0 + std::max(amplitude, 0.0)) / spec.norm_;
        spec.check_normalization();
        return spec;
    }

    LatentFamily family() const { return family_; }
    LatentDomain domain() const { return domain_; }
    double length() const { return domain_length(domain_); }
    const DensityMetadata& metadata() const { return metadata_; }
    double epsilon() const { return epsilon_; }
    unsigned frequency() const { return frequency_; }
    double center() const { return center_; }
    double half_width() const { return half_width_; }
    double amplitude() const { return amplitude_; }

    double operator()(double theta) const {
        switch (family_) {
            case LatentFamily::uniform:
                return 1.0 / norm_;
            case LatentFamily::cosine_perturbed:
                return (1.0 + epsilon_ * std::cos(static_cast<double>(frequency_) * theta)) /
                       norm_;
            case LatentFamily::piecewise_bump: {
                const double tent =
                    std::max(0.0, 1.0 - std::abs(theta - center_) / half_width_);
                return (1.0 + amplitude_ * tent) / norm_;
            }
        }
        throw std::logic_error("unknown latent family");
    }

    // Interior points where the density is not smooth; quadrature code
    // integrates piece by piece between them.
    std::vector<double> smooth_breakpoints() const {
        if (family_ != LatentFamily::piecewise_bump) return {};
        return {center_ - half_width_, center_, center_ + half_width_};
    }

private:
    static LatentDensitySpec make_uniform(LatentDomain domain) {
        LatentDensitySpec spec;
        spec.domain_ = domain;
        spec.norm_ = domain_length(domain);
        spec.metadata_.density_max = 1.0 / spec.norm_;
        return spec;
    }

    void check_normalization() const {
        const double len = length();
        std::vector<double> cuts = smooth_breakpoints();
        cuts.insert(cuts.begin(), 0.0);
        cuts.push_back(len);
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            total += detail::adaptive_simpson([this](double t) { return (*this)(t); }, cuts[i],
                                              cuts[i + 1], 1e-12);
        if (std::abs(total - 1.0) > 1e-8)
            throw std::invalid_argument("latent density does not integrate to 1");
    }

    LatentFamily family_ = LatentFamily::uniform;
    LatentDomain domain_ = LatentDomain::circle;
    double norm_ = 2.0 * std::numbers::pi;
    double epsilon_ = 0.0;
    unsigned frequency_ = 0;
    double center_ = 0.0;
    double half_width_ = 0.0;
    double amplitude_ = 0.0;
    DensityMetadata metadata_;
};

// Number of knots of the tabulated CDF used by the latent sampler.
inline constexpr std::size_t kCdfKnots = 4096;

namespace detail {

struct CdfTable {
    double step = 0.0;
    std::vector<double> cum;  // normalized, cum.front() = 0, cum.back() = 1
};

inline CdfTable tabulate_cdf(const LatentDensitySpec& density) {
    CdfTable table;
    const double len = density.length();
    table.step = len / static_cast<double>(kCdfKnots - 1);
    table.cum.resize(kCdfKnots);
    table.cum[0] = 0.0;
    double prev = density(0.0);
    for (std::size_t k = 1; k < kCdfKnots; ++k) {
        const double cur = density(static_cast<double>(k) * table.step);
        table.cum[k] = table.cum[k - 1] + 0.5 * (prev + cur) * table.step;
        prev = cur;
    }
    const double total = table.cum.back();
    for (auto& c : table.cum) c /= total;
    table.cum.back() = 1.0;
    return table;
}

}  // namespace detail

// i.i.d. latent draws by inverting the tabulated CDF with linear
// interpolation; a pure function of (density, n, stream state).
inline std::vector<double> sample_latent(const LatentDensitySpec& density, std::size_t n,
                                         RngStream& rng) {
    if (n == 0) throw std::invalid_argument("sample_latent: n must be positive");
    const auto table = detail::tabulate_cdf(density);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), u);
        const std::size_t idx =
            std::min<std::size_t>(static_cast<std::size_t>(it - table.cum.begin()) - 1,
                                  table.cum.size() - 2);
        const double lo = table.cum[idx];
        const double hi = table.cum[idx + 1];
        const double frac = hi > lo ? (u - lo) / (hi - lo) : 0.0;
        out[i] = (static_cast<double>(idx) + frac) * table.step;
    }
    return out;
}

enum class ManifoldShape { circle, arc, rotated_image };

inline std::string_view to_string(ManifoldShape s) {
    switch (s) {
        case ManifoldShape::circle: return "circle";
        case ManifoldShape::arc: return "arc";
        case ManifoldShape::rotated_image: return "rotated_image";
    }
    throw std::logic_error("unknown manifold shape");
}

inline ManifoldShape manifold_shape_from_string(std::string_view name) {
    if (name == "circle") return ManifoldShape::circle;
    if (name == "arc") return ManifoldShape::arc;
    if (name == "rotated_image") return ManifoldShape::rotated_image;
    throw std::invalid_argument("unknown manifold shape '" + std::string(name) +
                                "' (expected circle, arc or rotated_image)");
}

inline LatentDomain latent_domain_of(ManifoldShape shape) {
    return shape == ManifoldShape::circle ? LatentDomain::circle : LatentDomain::arc;
}

struct ManifoldSpec {
    ManifoldShape shape = ManifoldShape::circle;
    std::size_t ambient_dim = 2;       // circle/arc; images use resolution^2
    std::uint64_t embedding_seed = 0;  // 0 selects the canonical embedding
    bool normalize = false;            // images: divide vectors by sqrt(m)
    unsigned resolution = 0;           // images: output grid W
};

namespace detail {

// First two columns of a seeded orthogonal frame in R^m, via modified
// Gram-Schmidt with one re-orthogonalization pass.
inline std::pair<std::vector<double>, std::vector<double>> orthonormal_pair(
    std::size_t m, std::uint64_t embedding_seed) {
    std::vector<double> q1(m), q2(m);
    RngStream rng(derive_seed(embedding_seed, "embedding"));
    for (auto& v : q1) v = rng.normal();
    for (auto& v : q2) v = rng.normal();
    const auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        const double inv = 1.0 / std::sqrt(s);
        for (auto& x : v) x *= inv;
    };
    const auto project_out = [](std::vector<double>& v, const std::vector<double>& u) {
        double dot = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * u[k];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * u[k];
    };
    normalize(q1);
    project_out(q2, q1);
    project_out(q2, q1);
    normalize(q2);
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        dot += q1[k] * q2[k];
        n1 += q1[k] * q1[k];
        n2 += q2[k] * q2[k];
    }
    if (std::abs(dot) > 1e-10 || std::abs(n1 - 1.0) > 1e-10 || std::abs(n2 - 1.0) > 1e-10)
        throw std::logic_error("embedding frame failed the orthonormality check");
    return {std::move(q1), std::move(q2)};
}

}  // namespace detail

// Isometric embedding theta -> cos(theta) q1 + sin(theta) q2 with (q1, q2)
// the first two columns of an orthogonal frame derived from embedding_seed.
// Seed 0 uses the canonical coordinate pair, giving literal
// (cos theta, sin theta, 0, ..., 0) rows. Pairwise distances depend only on
// the latents.
inline Matrix embed_circle(std::span<const double> latents, const ManifoldSpec& spec) {
    if (spec.shape == ManifoldShape::rotated_image)
        throw std::invalid_argument("embed_circle: not applicable to image manifolds");
    const std::size_t m = spec.ambient_dim;
    if (m < 2) throw std::invalid_argument("embed_circle: ambient dimension must be >= 2");
    std::vector<double> q1, q2;
    if (spec.embedding_seed == 0) {
        q1.assign(m, 0.0);
        q2.assign(m, 0.0);
        q1[0] = 1.0;
        q2[1] = 1.0;
    } else {
        std::tie(q1, q2) = detail::orthonormal_pair(m, spec.embedding_seed);
    }
    Matrix out(latents.size(), m, 0.0);
    for (std::size_t i = 0; i < latents.size(); ++i) {
        const double c = std::cos(latents[i]);
        const double s = std::sin(latents[i]);
        for (std::size_t k = 0; k < m; ++k) out(i, k) = c * q1[k] + s * q2[k];
    }
    return out;
}

struct NoiseSpec {
    double sigma = 0.0;

    void validate() const {
        if (!(sigma >= 0.0) || !std::isfinite(sigma))
            throw std::invalid_argument("noise sigma must be nonnegative and finite");
    }
};

// Adds i.i.d. N(0, sigma^2) per coordinate, in row-major draw order.
inline Matrix add_gaussian_noise(const Matrix& points, const NoiseSpec& noise, RngStream& rng) {
    noise.validate();
    Matrix out = points;
    if (noise.sigma == 0.0) return out;
    for (auto& v : out.data()) v += noise.sigma * rng.normal();
    return out;
}

namespace detail {

inline double bilinear_at(const Matrix& img, double row, double col) {
    const double fr = std::floor(row);
    const double fc = std::floor(col);
    const long i0 = static_cast<long>(fr);
    const long j0 = static_cast<long>(fc);
    const double wr = row - fr;
    const double wc = col - fc;
    const auto at = [&](long i, long j) -> double {
        if (i < 0 || j < 0 || i >= static_cast<long>(img.rows()) ||
            j >= static_cast<long>(img.cols()))
            return 0.0;
        return img(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    };
    return (1.0 - wr) * (1.0 - wc) * at(i0, j0) + (1.0 - wr) * wc * at(i0, j0 + 1) +
           wr * (1.0 - wc) * at(i0 + 1, j0) + wr * wc * at(i0 + 1, j0 + 1);
}

}  // namespace detail

// Rotates the continuous bilinear interpolant of a square glyph about its
// center and resamples on a W x W grid, flattened row-major. Points falling
// outside the glyph read as zero. With normalize set, the vector is divided
// by sqrt(W^2).
inline std::vector<double> render_rotated_image(const Matrix& base, double angle,
                                                unsigned resolution, bool normalize) {
    if (base.rows() != base.cols() || base.rows() < 2)
        throw std::invalid_argument("render_rotated_image: base glyph must be square");
    if (!(angle >= 0.0) || !(angle <= 0.5 * std::numbers::pi))
        throw std::domain_error("render_rotated_image: angle must lie in [0, pi/2]");
    if (resolution < 8)
        throw std::invalid_argument("render_rotated_image: resolution must be at least 8");
    const std::size_t w0 = base.rows();
    const unsigned w = resolution;
    const double scale = static_cast<double>(w0) / static_cast<double>(w);
    const double center = 0.5 * static_cast<double>(w0);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    std::vector<double> out(static_cast<std::size_t>(w) * w);
    for (unsigned r = 0; r < w; ++r) {
        const double dv = (static_cast<double>(r) + 0.5) * scale - center;
        for (unsigned c = 0; c < w; ++c) {
            const double du = (static_cast<double>(c) + 0.5) * scale - center;
            const double src_col = center + ca * du + sa * dv - 0.5;
            const double src_row = center - sa * du + ca * dv - 0.5;
            out[static_cast<std::size_t>(r) * w + c] = detail::bilinear_at(base, src_row, src_col);
        }
    }
    if (normalize) {
        const double inv = 1.0 / static_cast<double>(w);
        for (auto& v : out) v *= inv;
    }
    return out;
}

// Deterministic 28x28 figure-eight glyph: two smooth rings, values in
// [0, 255]. Used whenever no glyph file is configured.
inline Matrix synthetic_glyph() {
    constexpr std::size_t w0 = 28;
    Matrix g(w0, w0, 0.0);
    const auto ring = [](double u, double v, double cu, double cv, double radius,
                         double width) {
        const double d = std::sqrt((u - cu) * (u - cu) + (v - cv) * (v - cv));
        const double t = (d - radius) / width;
        return std::exp(-t * t);
    };
    for (std::size_t i = 0; i < w0; ++i) {
        const double v = (static_cast<double>(i) + 0.5) / w0;
        for (std::size_t j = 0; j < w0; ++j) {
            const double u = (static_cast<double>(j) + 0.5) / w0;
            const double a = ring(u, v, 0.5, 0.34, 0.15, 0.055);
            const double b = ring(u, v, 0.5, 0.66, 0.15, 0.055);
            g(i, j) = 255.0 * std::min(1.0, a + b);
        }
    }
    return g;
}

class IdxParseError : public std::runtime_error {
public:
    IdxParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Reads an IDX image container (magic 0x00000803, big-endian u32 dimensions,
// one byte per pixel) into a list of pixel grids with values in [0, 255].
// Grids need not be square here; squareness is checked where rotation
// actually requires it.
inline std::vector<Matrix> load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open glyph file '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const auto need = [&](std::size_t upto, const char* what) {
        if (bytes.size() < upto)
            throw IdxParseError(std::string("truncated ") + what, bytes.size());
    };
    need(4, "magic");
    if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || bytes[3] != 0x03)
        throw IdxParseError("bad magic (expected 0x00000803)", 0);
    need(16, "dimension header");
    const auto be32 = [&](std::size_t at) {
        return (static_cast<std::uint64_t>(bytes[at]) << 24) |
               (static_cast<std::uint64_t>(bytes[at + 1]) << 16) |
               (static_cast<std::uint64_t>(bytes[at + 2]) << 8) |
               static_cast<std::uint64_t>(bytes[at + 3]);
    };
    const std::uint64_t count = be32(4);
    const std::uint64_t rows = be32(8);
    const std::uint64_t cols = be32(12);
    if (count == 0 || rows == 0 || cols == 0)
        throw IdxParseError("zero-sized dimension", 4);
    const std::uint64_t expected = 16 + count * rows * cols;
    if (bytes.size() < expected)
        throw IdxParseError("truncated pixel data (expected " + std::to_string(expected) +
                                " bytes)",
                            bytes.size());
    std::vector<Matrix> out;
    out.reserve(count);
    std::size_t at = 16;
    for (std::uint64_t img = 0; img < count; ++img) {
        Matrix g(rows, cols, 0.0);
        for (std::uint64_t i = 0; i < rows; ++i)
            for (std::uint64_t j = 0; j < cols; ++j)
                g(i, j) = static_cast<double>(bytes[at++]);
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace kmmd
