#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chemotax/pitchfork.hpp"
#include "chemotax/steady.hpp"

namespace chemotax {

/// 17 significant digits: enough for bitwise round-trip of doubles.
inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

using HeaderKV = std::vector<std::pair<std::string, std::string>>;

/// Plot-ready CSV with a '#'-prefixed header block recording the resolved
/// configuration, then a column-name row, then rows of %.17g values.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const HeaderKV& header,
              const std::vector<std::string>& columns)
        : out_(path) {
        if (!out_) throw std::runtime_error("cannot open output file: " + path);
        for (const auto& [k, v] : header) out_ << "# " << k << " = " << v << "\n";
        for (size_t i = 0; i < columns.size(); ++i)
            out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }

    void row(const std::vector<double>& values) {
        for (size_t i = 0; i < values.size(); ++i)
            out_ << fmt_g17(values[i]) << (i + 1 < values.size() ? "," : "\n");
    }

    void row_mixed(const std::vector<std::string>& values) {
        for (size_t i = 0; i < values.size(); ++i)
            out_ << values[i] << (i + 1 < values.size() ? "," : "\n");
    }

  private:
    std::ofstream out_;
};

inline nlohmann::json to_json(const Diagnostics& d) {
    return nlohmann::json{{"l1_mass", d.l1_mass},
                          {"l2_norm_sq", d.l2_norm_sq},
                          {"min_u", d.min_u},
                          {"max_u", d.max_u},
                          {"min_v", d.min_v},
                          {"monotone_u", d.monotone_u},
                          {"monotone_v", d.monotone_v},
                          {"newton_residual", d.newton_residual},
                          {"amplitude", d.amplitude},
                          {"mass_identity_gap", d.mass_identity_gap},
                          {"mass_bound_ok", d.mass_bound_ok}};
}

inline const char* to_string(BranchTermination t) {
    switch (t) {
        case BranchTermination::ChiLimit: return "ChiLimit";
        case BranchTermination::StepFailure: return "StepFailure";
        case BranchTermination::FoldDetected: return "FoldDetected";
        case BranchTermination::UserStop: return "UserStop";
    }
    return "?";
}

inline nlohmann::json to_json(const Branch& br, bool include_states = false) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& bp : br.points) {
        nlohmann::json j{{"s", bp.arclength},
                         {"chi", bp.chi},
                         {"sigma", bp.sigma},
                         {"diagnostics", to_json(bp.diag)}};
        if (include_states) {
            j["u"] = bp.state.u;
            j["v"] = bp.state.v;
        }
        pts.push_back(std::move(j));
    }
    return nlohmann::json{{"mode_k", br.mode_k},
                          {"chi_onset", br.chi_onset},
                          {"q_onset", br.q_onset},
                          {"terminated_by", to_string(br.terminated_by)},
                          {"fold_count", br.fold_count},
                          {"events", br.events},
                          {"points", std::move(pts)}};
}

inline nlohmann::json to_json(const PitchforkRecord& r) {
    nlohmann::json j{{"k", r.k},
                     {"k2", r.k2},
                     {"k3_closed", r.k3_closed},
                     {"k3_fourier", r.k3_fourier},
                     {"abc", {r.a, r.b, r.c}},
                     {"r3", r.r3},
                     {"fourier", {{"p0", r.p0}, {"p2", r.p2}, {"q0", r.q0}, {"q2", r.q2}}},
                     {"region_case", to_string(r.region_case)},
                     {"boundary_case", r.boundary_case},
                     {"stability", to_string(r.stability)},
                     {"notes", r.notes}};
    if (r.r1) j["r1"] = *r.r1;
    if (r.r2) j["r2"] = *r.r2;
    nlohmann::json chart = nlohmann::json::array();
    for (size_t i = 0; i < r.chart.sign.size(); ++i) {
        const double lo = (i == 0) ? 0.0 : r.chart.breakpoints[i - 1];
        nlohmann::json seg{{"from", lo}, {"sign", r.chart.sign[i]}};
        if (i < r.chart.breakpoints.size()) seg["to"] = r.chart.breakpoints[i];
        chart.push_back(std::move(seg));
    }
    j["sign_chart"] = std::move(chart);
    return j;
}

}  // namespace chemotax
