#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"

namespace chemotax {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Resolved experiment configuration. File format: line-oriented
/// `key = value`, '#' comments; command-line flags override file values;
/// unknown keys are hard errors.
struct ExperimentConfig {
    std::string kinetics = "linear";  // linear | custom (built-in saturating family)
    double beta = 1.0;
    double D1 = 1.0, D2 = 1.0;
    double chi = 4.0;
    double ubar = 1.0;
    double L = M_PI;
    int N = 200;
    int k = 1;
    int kmax = 10;
    double chi_max = 20.0;
    double dt = 1e-3;
    double t_final = 50.0;
    double eps = 1e-3;
    uint64_t seed = 12345;
    std::string out_dir = ".";
    bool out_dir_explicit = false;

    Kinetics make_kinetics() const {
        if (kinetics == "linear") return Kinetics::linear(beta);
        if (kinetics == "custom") return Kinetics::saturating(beta);
        throw ConfigError("kinetics must be 'linear' or 'custom', got '" + kinetics + "'");
    }

    ModelParams params() const {
        try {
            return ModelParams(D1, D2, chi, ubar, L, make_kinetics());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    Grid grid() const {
        if (N < 2) throw ConfigError("N must be at least 2");
        return Grid(N, L);
    }

    /// Deterministic key order; used verbatim in CSV header blocks.
    std::vector<std::pair<std::string, std::string>> resolved() const {
        auto g17 = [](double x) {
            char b[40];
            std::snprintf(b, sizeof b, "%.17g", x);
            return std::string(b);
        };
        return {{"kinetics", kinetics},
                {"beta", g17(beta)},
                {"D1", g17(D1)},
                {"D2", g17(D2)},
                {"chi", g17(chi)},
                {"ubar", g17(ubar)},
                {"L", g17(L)},
                {"N", std::to_string(N)},
                {"k", std::to_string(k)},
                {"kmax", std::to_string(kmax)},
                {"chi_max", g17(chi_max)},
                {"dt", g17(dt)},
                {"t_final", g17(t_final)},
                {"eps", g17(eps)},
                {"seed", std::to_string(seed)},
                {"out", out_dir}};
    }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double x = std::stod(value, &pos);
        while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos]))) ++pos;
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("malformed value for '" + key + "': '" + value + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const long long x = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("malformed value for '" + key + "': '" + value + "'");
    }
}

inline void require_positive(const std::string& key, double x) {
    if (!(x > 0.0)) throw ConfigError("'" + key + "' must be positive");
}

}  // namespace detail

/// Applies one key/value pair with validation. Unknown keys are hard errors.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
    using detail::parse_double;
    using detail::parse_int;
    using detail::require_positive;
    if (key == "kinetics") {
        if (value != "linear" && value != "custom")
            throw ConfigError("kinetics must be 'linear' or 'custom', got '" + value + "'");
        cfg.kinetics = value;
    } else if (key == "beta") {
        cfg.beta = parse_double(key, value);
        require_positive(key, cfg.beta);
    } else if (key == "D1") {
        cfg.D1 = parse_double(key, value);
        require_positive(key, cfg.D1);
    } else if (key == "D2") {
        cfg.D2 = parse_double(key, value);
        require_positive(key, cfg.D2);
    } else if (key == "chi") {
        cfg.chi = parse_double(key, value);
        if (cfg.chi < 0.0) throw ConfigError("'chi' must be nonnegative");
    } else if (key == "ubar") {
        cfg.ubar = parse_double(key, value);
        require_positive(key, cfg.ubar);
    } else if (key == "L") {
        cfg.L = parse_double(key, value);
        require_positive(key, cfg.L);
    } else if (key == "N") {
        cfg.N = static_cast<int>(parse_int(key, value));
        if (cfg.N < 2) throw ConfigError("'N' must be at least 2");
    } else if (key == "k") {
        cfg.k = static_cast<int>(parse_int(key, value));
        if (cfg.k < 1) throw ConfigError("'k' must be at least 1");
    } else if (key == "kmax") {
        cfg.kmax = static_cast<int>(parse_int(key, value));
        if (cfg.kmax < 1) throw ConfigError("'kmax' must be at least 1");
    } else if (key == "chi_max") {
        cfg.chi_max = parse_double(key, value);
        require_positive(key, cfg.chi_max);
    } else if (key == "dt") {
        cfg.dt = parse_double(key, value);
        require_positive(key, cfg.dt);
    } else if (key == "t_final") {
        cfg.t_final = parse_double(key, value);
        require_positive(key, cfg.t_final);
    } else if (key == "eps") {
        cfg.eps = parse_double(key, value);
        if (cfg.eps < 0.0) throw ConfigError("'eps' must be nonnegative");
    } else if (key == "seed") {
        cfg.seed = static_cast<uint64_t>(parse_int(key, value));
    } else if (key == "out") {
        cfg.out_dir = value;
        cfg.out_dir_explicit = true;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

/// Reads a `key = value` config file into cfg. Missing file is an error.
inline void parse_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
        apply_config_key(cfg, key, value);
    }
}

/// CHEMOTAX_OUT is the output-directory fallback when neither file nor flag
/// set one.
inline void apply_out_dir_env_fallback(ExperimentConfig& cfg) {
    if (cfg.out_dir_explicit) return;
    if (const char* env = std::getenv("CHEMOTAX_OUT")) cfg.out_dir = env;
}

}  // namespace chemotax
