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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "datagen.hpp"
#include "kernels.hpp"
#include "statistics.hpp"

namespace kmmd {

// Error with the dotted key path of the offending entry, e.g. "test.n_x".
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key_path, const std::string& why)
        : std::runtime_error("config error at " + key_path + ": " + why),
          key_path_(key_path) {}

    const std::string& key_path() const { return key_path_; }

private:
    std::string key_path_;
};

// Density parameters as written in a config; lowered to a LatentDensitySpec
// once the manifold fixes the latent domain.
struct DensityConfig {
    LatentFamily family = LatentFamily::uniform;
    double epsilon = 0.0;
    unsigned frequency = 0;  // 0 = domain default
    double center = 0.0;
    double half_width = 0.0;
    double amplitude = 0.0;

    LatentDensitySpec build(LatentDomain domain) const {
        switch (family) {
            case LatentFamily::uniform: return LatentDensitySpec::uniform(domain);
            case LatentFamily::cosine_perturbed:
                return LatentDensitySpec::cosine_perturbed(domain, epsilon, frequency);
            case LatentFamily::piecewise_bump:
                return LatentDensitySpec::piecewise_bump(domain, center, half_width, amplitude);
        }
        throw std::logic_error("unknown latent family");
    }
};

struct KernelConfig {
    KernelFamily family = KernelFamily::gaussian;
    bool median = true;             // bandwidth = "median", the default rule
    double bandwidth = 0.0;         // fixed bandwidth when median is false
    std::vector<double> sweep;      // optional bandwidth ladder for sweeps
};

// Everything one experiment needs. Parsed from an INI-style file or JSON;
// both lower to the same JSON tree first.
struct ExperimentConfig {
    ManifoldSpec manifold;
    std::string glyph_file;  // empty = built-in synthetic glyph
    DensityConfig density_p;
    DensityConfig density_q;
    NoiseSpec noise;
    KernelConfig kernel;

    std::size_t n_x = 0;  // required
    std::size_t n_y = 0;  // required
    double alpha_level = 0.05;
    std::size_t n_boot = 300;
    std::size_t n_run = 100;
    StatisticVariant statistic_variant = StatisticVariant::biased;
    std::uint64_t seed = 0;
    unsigned n_threads = 1;

    std::vector<std::size_t> ambient_dims;  // power table rows (circle, arc)
    std::vector<unsigned> resolutions;      // power table rows (images)

    std::size_t oracle_grid_nodes = 1024;
    std::vector<double> oracle_gammas{0.4, 0.2, 0.1, 0.05};
    std::size_t witness_grid = 256;

    std::string output_path;  // empty = stdout

    LatentDomain latent_domain() const { return latent_domain_of(manifold.shape); }

    // Structural checks with key-path errors. Prints the balance warning to
    // stderr; an unbalanced split is legal but degrades the test.
    void validate() const {
        if (n_x == 0) throw ConfigError("test.n_x", "must be positive");
        if (n_y == 0) throw ConfigError("test.n_y", "must be positive");
        if (!(alpha_level > 0.0) || !(alpha_level < 1.0))
            throw ConfigError("test.alpha_level", "must lie in (0, 1)");
        if (n_boot == 0) throw ConfigError("test.n_boot", "must be positive");
        if (n_run == 0) throw ConfigError("test.n_run", "must be positive");
        if (statistic_variant == StatisticVariant::linear &&
            (n_x != n_y || n_x % 2 != 0))
            throw ConfigError("test.statistic",
                              "linear variant needs equal even sample sizes");
        if (!kernel.median && !(kernel.bandwidth > 0.0))
            throw ConfigError("kernel.bandwidth", "must be positive or the string 'median'");
        for (double g : kernel.sweep)
            if (!(g > 0.0) || !std::isfinite(g))
                throw ConfigError("kernel.sweep", "entries must be positive and finite");
        if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma))
            throw ConfigError("noise.sigma", "must be nonnegative and finite");
        if (manifold.shape == ManifoldShape::rotated_image) {
            if (manifold.resolution < 8)
                throw ConfigError("manifold.resolution", "must be at least 8");
            for (unsigned w : resolutions)
                if (w < 8) throw ConfigError("power.resolutions", "entries must be at least 8");
        } else {
            if (manifold.ambient_dim < 2)
                throw ConfigError("manifold.ambient_dim", "must be at least 2");
            for (std::size_t m : ambient_dims)
                if (m < 2)
                    throw ConfigError("power.ambient_dims", "entries must be at least 2");
        }
        if (oracle_grid_nodes < 2) throw ConfigError("oracle.grid_nodes", "need at least 2");
        for (double g : oracle_gammas)
            if (!(g > 0.0) || !std::isfinite(g))
                throw ConfigError("oracle.gammas", "entries must be positive and finite");
        if (witness_grid == 0) throw ConfigError("witness.grid_size", "must be positive");

        const double balance =
            static_cast<double>(n_x) / static_cast<double>(n_x + n_y);
        if (balance < 0.1 || balance > 0.9)
            std::cerr << "warning: sample balance n_x/(n_x+n_y) = " << balance
                      << " lies outside [0.1, 0.9]; the test level degrades for"
                         " lopsided splits\n";
    }
};

namespace detail {

inline std::string join_path(std::string_view section, std::string_view key) {
    return std::string(section) + "." + std::string(key);
}

// Typed reads off the lowered JSON tree, every failure naming the key path.
class ConfigReader {
public:
    explicit ConfigReader(const nlohmann::json& root) : root_(root) {
        if (!root.is_object()) throw ConfigError("<root>", "expected an object");
    }

    bool has(std::string_view section, std::string_view key) const {
        const auto s = root_.find(section);
        return s != root_.end() && s->is_object() && s->contains(key);
    }

    const nlohmann::json& at(std::string_view section, std::string_view key) const {
        const auto s = root_.find(section);
        if (s == root_.end() || !s->contains(key))
            throw ConfigError(join_path(section, key), "missing required key");
        return s->at(std::string(key));
    }

    double number(std::string_view section, std::string_view key, double fallback) const {
        if (!has(section, key)) return fallback;
        const auto& v = at(section, key);
        if (!v.is_number()) throw ConfigError(join_path(section, key), "expected a number");
        return v.get<double>();
    }

    std::uint64_t unsigned_int(std::string_view section, std::string_view key,
                               std::uint64_t fallback, bool required = false) const {
        if (!has(section, key)) {
            if (required) throw ConfigError(join_path(section, key), "missing required key");
            return fallback;
        }
        const auto& v = at(section, key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                       v.get<std::int64_t>() < 0))
            throw ConfigError(join_path(section, key), "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(std::string_view section, std::string_view key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const auto& v = at(section, key);
        if (!v.is_boolean()) throw ConfigError(join_path(section, key), "expected true or false");
        return v.get<bool>();
    }

    std::string text(std::string_view section, std::string_view key,
                     const std::string& fallback) const {
        if (!has(section, key)) return fallback;
        const auto& v = at(section, key);
        if (!v.is_string()) throw ConfigError(join_path(section, key), "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> number_list(std::string_view section, std::string_view key) const {
        std::vector<double> out;
        if (!has(section, key)) return out;
        const auto& v = at(section, key);
        const auto take = [&](const nlohmann::json& e) {
            if (!e.is_number())
                throw ConfigError(join_path(section, key), "expected numbers");
            out.push_back(e.get<double>());
        };
        if (v.is_array())
            for (const auto& e : v) take(e);
        else
            take(v);
        return out;
    }

    const nlohmann::json& root() const { return root_; }

private:
    const nlohmann::json& root_;
};

inline void reject_unknown_keys(const nlohmann::json& root) {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> known{
        {"manifold", {"shape", "ambient_dim", "embedding_seed", "normalize", "resolution",
                      "glyph_file"}},
        {"density_p", {"family", "epsilon", "frequency", "center", "half_width", "amplitude"}},
        {"density_q", {"family", "epsilon", "frequency", "center", "half_width", "amplitude"}},
        {"noise", {"sigma"}},
        {"kernel", {"family", "bandwidth", "sweep"}},
        {"test", {"n_x", "n_y", "alpha_level", "n_boot", "n_run", "statistic", "seed",
                  "threads"}},
        {"power", {"ambient_dims", "resolutions"}},
        {"oracle", {"grid_nodes", "gammas"}},
        {"witness", {"grid_size"}},
        {"output", {"path"}},
    };
    for (const auto& [section, value] : root.items()) {
        const auto entry =
            std::find_if(known.begin(), known.end(),
                         [&](const auto& kv) { return kv.first == section; });
        if (entry == known.end()) throw ConfigError(section, "unknown section");
        if (!value.is_object()) throw ConfigError(section, "expected a section object");
        for (const auto& [key, ignored] : value.items()) {
            (void)ignored;
            if (std::find(entry->second.begin(), entry->second.end(), key) ==
                entry->second.end())
                throw ConfigError(join_path(section, key), "unknown key");
        }
    }
}

inline DensityConfig density_from(const ConfigReader& r, std::string_view section) {
    DensityConfig d;
    const std::string family = r.text(section, "family", "uniform");
    try {
        d.family = latent_family_from_string(family);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join_path(section, "family"), e.what());
    }
    d.epsilon = r.number(section, "epsilon", 0.0);
    d.frequency = static_cast<unsigned>(r.unsigned_int(section, "frequency", 0));
    d.center = r.number(section, "center", 0.0);
    d.half_width = r.number(section, "half_width", 0.0);
    d.amplitude = r.number(section, "amplitude", 0.0);
    return d;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& root) {
    detail::reject_unknown_keys(root);
    const detail::ConfigReader r(root);
    ExperimentConfig cfg;

    const std::string shape = r.text("manifold", "shape", "circle");
    try {
        cfg.manifold.shape = manifold_shape_from_string(shape);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("manifold.shape", e.what());
    }
    cfg.manifold.ambient_dim =
        static_cast<std::size_t>(r.unsigned_int("manifold", "ambient_dim", 2));
    cfg.manifold.embedding_seed = r.unsigned_int("manifold", "embedding_seed", 0);
    cfg.manifold.normalize = r.boolean("manifold", "normalize", false);
    cfg.manifold.resolution =
        static_cast<unsigned>(r.unsigned_int("manifold", "resolution", 0));
    cfg.glyph_file = r.text("manifold", "glyph_file", "");

    cfg.density_p = detail::density_from(r, "density_p");
    cfg.density_q = detail::density_from(r, "density_q");
    cfg.noise.sigma = r.number("noise", "sigma", 0.0);

    const std::string kernel_family = r.text("kernel", "family", "gaussian");
    try {
        cfg.kernel.family = kernel_family_from_string(kernel_family);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("kernel.family", e.what());
    }
    if (r.has("kernel", "bandwidth")) {
        const auto& bw = r.at("kernel", "bandwidth");
        if (bw.is_string()) {
            if (bw.get<std::string>() != "median")
                throw ConfigError("kernel.bandwidth",
                                  "must be a positive number or the string 'median'");
            cfg.kernel.median = true;
        } else if (bw.is_number()) {
            cfg.kernel.median = false;
            cfg.kernel.bandwidth = bw.get<double>();
        } else {
            throw ConfigError("kernel.bandwidth",
                              "must be a positive number or the string 'median'");
        }
    }
    cfg.kernel.sweep = r.number_list("kernel", "sweep");

    cfg.n_x = static_cast<std::size_t>(r.unsigned_int("test", "n_x", 0, true));
    cfg.n_y = static_cast<std::size_t>(r.unsigned_int("test", "n_y", 0, true));
    cfg.alpha_level = r.number("test", "alpha_level", 0.05);
    cfg.n_boot = static_cast<std::size_t>(r.unsigned_int("test", "n_boot", 300));
    cfg.n_run = static_cast<std::size_t>(r.unsigned_int("test", "n_run", 100));
    const std::string variant = r.text("test", "statistic", "biased");
    try {
        cfg.statistic_variant = statistic_variant_from_string(variant);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("test.statistic", e.what());
    }
    cfg.seed = r.unsigned_int("test", "seed", 0);
    cfg.n_threads = static_cast<unsigned>(r.unsigned_int("test", "threads", 1));

    for (double m : r.number_list("power", "ambient_dims"))
        cfg.ambient_dims.push_back(static_cast<std::size_t>(m));
    for (double w : r.number_list("power", "resolutions"))
        cfg.resolutions.push_back(static_cast<unsigned>(w));

    cfg.oracle_grid_nodes =
        static_cast<std::size_t>(r.unsigned_int("oracle", "grid_nodes", 1024));
    if (r.has("oracle", "gammas")) cfg.oracle_gammas = r.number_list("oracle", "gammas");
    cfg.witness_grid = static_cast<std::size_t>(r.unsigned_int("witness", "grid_size", 256));
    cfg.output_path = r.text("output", "path", "");

    cfg.validate();
    return cfg;
}

// Canonical JSON image of a config, defaults included. Parsing the dump
// reproduces an equivalent config.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["manifold"]["shape"] = std::string(to_string(cfg.manifold.shape));
    j["manifold"]["ambient_dim"] = cfg.manifold.ambient_dim;
    j["manifold"]["embedding_seed"] = cfg.manifold.embedding_seed;
    j["manifold"]["normalize"] = cfg.manifold.normalize;
    j["manifold"]["resolution"] = cfg.manifold.resolution;
    j["manifold"]["glyph_file"] = cfg.glyph_file;
    const auto dump_density = [&](const char* section, const DensityConfig& d) {
        j[section]["family"] = std::string(to_string(d.family));
        j[section]["epsilon"] = d.epsilon;
        j[section]["frequency"] = d.frequency;
        j[section]["center"] = d.center;
        j[section]["half_width"] = d.half_width;
        j[section]["amplitude"] = d.amplitude;
    };
    dump_density("density_p", cfg.density_p);
    dump_density("density_q", cfg.density_q);
    j["noise"]["sigma"] = cfg.noise.sigma;
    j["kernel"]["family"] = std::string(to_string(cfg.kernel.family));
    if (cfg.kernel.median)
        j["kernel"]["bandwidth"] = "median";
    else
        j["kernel"]["bandwidth"] = cfg.kernel.bandwidth;
    if (!cfg.kernel.sweep.empty()) j["kernel"]["sweep"] = cfg.kernel.sweep;
    j["test"]["n_x"] = cfg.n_x;
    j["test"]["n_y"] = cfg.n_y;
    j["test"]["alpha_level"] = cfg.alpha_level;
    j["test"]["n_boot"] = cfg.n_boot;
    j["test"]["n_run"] = cfg.n_run;
    j["test"]["statistic"] = std::string(to_string(cfg.statistic_variant));
    j["test"]["seed"] = cfg.seed;
    j["test"]["threads"] = cfg.n_threads;
    if (!cfg.ambient_dims.empty()) j["power"]["ambient_dims"] = cfg.ambient_dims;
    if (!cfg.resolutions.empty()) j["power"]["resolutions"] = cfg.resolutions;
    j["oracle"]["grid_nodes"] = cfg.oracle_grid_nodes;
    j["oracle"]["gammas"] = cfg.oracle_gammas;
    j["witness"]["grid_size"] = cfg.witness_grid;
    j["output"]["path"] = cfg.output_path;
    return j;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto from = s.find_first_not_of(" \t\r\n");
    if (from == std::string_view::npos) return "";
    const auto to = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(from, to - from + 1));
}

// One scalar token from an INI value: bool, integer, double, or string.
inline nlohmann::json ini_token(const std::string& tok) {
    if (tok == "true") return true;
    if (tok == "false") return false;
    {
        std::uint64_t u = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), u);
        if (ec == std::errc() && p == tok.data() + tok.size()) return u;
    }
    {
        std::int64_t i = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
        if (ec == std::errc() && p == tok.data() + tok.size()) return i;
    }
    {
        double d = 0.0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
        if (ec == std::errc() && p == tok.data() + tok.size()) return d;
    }
    return tok;
}

}  // namespace detail

// Lowers key = value lines under [section] headers into the JSON tree the
// parser reads. Values: quoted text stays one string; otherwise the value is
// split on spaces and commas, multiple numeric tokens become an array, a
// single token becomes a scalar. '#' and ';' start comments.
inline nlohmann::json ini_to_json(std::istream& in) {
    nlohmann::json root = nlohmann::json::object();
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line.resize(cut);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw ConfigError("line " + std::to_string(line_no), "unterminated section header");
            section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(line_no), "empty section name");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no), "empty key");
        if (section.empty())
            throw ConfigError(key, "key appears before any [section] header");
        if (root.contains(section) && root[section].contains(key))
            throw ConfigError(detail::join_path(section, key), "duplicate key");

        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            root[section][key] = value.substr(1, value.size() - 2);
            continue;
        }
        std::vector<std::string> tokens;
        std::string tok;
        for (char c : value) {
            if (c == ' ' || c == '\t' || c == ',') {
                if (!tok.empty()) tokens.push_back(std::exchange(tok, ""));
            } else {
                tok.push_back(c);
            }
        }
        if (!tok.empty()) tokens.push_back(tok);
        if (tokens.empty())
            throw ConfigError(detail::join_path(section, key), "empty value");
        if (tokens.size() == 1) {
            root[section][key] = detail::ini_token(tokens.front());
        } else {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& t : tokens) {
                auto v = detail::ini_token(t);
                if (!v.is_number())
                    throw ConfigError(detail::join_path(section, key),
                                      "lists may contain only numbers");
                arr.push_back(std::move(v));
            }
            root[section][key] = std::move(arr);
        }
    }
    return root;
}

// Reads a config file, JSON or INI; JSON is detected by a leading '{'.
inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    nlohmann::json tree;
    if (first != std::string::npos && text[first] == '{') {
        try {
            tree = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("config error in '" + path + "': " + e.what());
        }
    } else {
        std::istringstream stream(text);
        tree = ini_to_json(stream);
    }
    return config_from_json(tree);
}

}  // namespace kmmd
