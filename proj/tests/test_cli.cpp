#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chemotax/cli.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"chemotax"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return chemotax::cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "chemotax_cli" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("analyze writes the mode table") {
    const fs::path out = fresh_dir("analyze");
    CHECK(run_cli({"analyze", "--kmax", "10", "--out", out.string()}) == 0);
    const std::string csv = slurp(out / "modes.csv");
    CHECK(csv.find("# D1 = 1") != std::string::npos);
    CHECK(csv.find("k,lambda_k,chi_k,Q_k,simple,trace,max_growth_at_chi") != std::string::npos);
    CHECK(csv.find("\n1,1,4,2,1,") != std::string::npos);  // k=1 row: chi_1 = 4, Q_1 = 2
}

TEST_CASE("analyze output is bitwise deterministic") {
    const fs::path o1 = fresh_dir("det1"), o2 = fresh_dir("det2");
    REQUIRE(run_cli({"analyze", "--seed", "5", "--out", o1.string()}) == 0);
    REQUIRE(run_cli({"analyze", "--seed", "5", "--out", o2.string()}) == 0);
    auto strip_out = [](std::string s) {
        // the out path itself appears in the recorded config; mask it
        size_t p = s.find("# out = ");
        if (p != std::string::npos) {
            size_t e = s.find('\n', p);
            s.erase(p, e - p);
        }
        return s;
    };
    CHECK(strip_out(slurp(o1 / "modes.csv")) == strip_out(slurp(o2 / "modes.csv")));
}

TEST_CASE("flags override the config file") {
    const fs::path out = fresh_dir("override");
    const fs::path cfg = out / "run.cfg";
    {
        std::ofstream c(cfg);
        c << "chi = 4\nkmax = 3\n";
    }
    CHECK(run_cli({"analyze", "--config", cfg.string(), "--chi", "5", "--out", out.string()}) == 0);
    CHECK(slurp(out / "modes.csv").find("# chi = 5") != std::string::npos);
}

TEST_CASE("usage and config errors exit with 2") {
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"analyze", "--D1", "-3", "--out", fresh_dir("err").string()}) == 2);
    const fs::path cfg = fresh_dir("errcfg") / "bad.cfg";
    {
        std::ofstream c(cfg);
        c << "unknown_key = 7\n";
    }
    CHECK(run_cli({"analyze", "--config", cfg.string()}) == 2);
    // pitchfork on nonlinear kinetics is a config error
    CHECK(run_cli({"pitchfork", "--kinetics", "custom", "--out", fresh_dir("pfc").string()}) == 2);
}

TEST_CASE("pitchfork emits record and chart") {
    const fs::path out = fresh_dir("pitchfork");
    CHECK(run_cli({"pitchfork", "--k", "1", "--out", out.string()}) == 0);
    const std::string js = slurp(out / "pitchfork.json");
    CHECK(js.find("\"k3_fourier\": 8.0") != std::string::npos);
    CHECK(js.find("\"region_case\": \"VI\"") != std::string::npos);
    CHECK(fs::exists(out / "pitchfork_chart.csv"));
}

TEST_CASE("continue emits branch json, csv and snapshots") {
    const fs::path out = fresh_dir("continue");
    CHECK(run_cli({"continue", "--k", "1", "--N", "100", "--chi-max", "8", "--snapshot-chi", "6",
                   "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "branch.json"));
    const std::string csv = slurp(out / "branch.csv");
    CHECK(csv.find("s,chi,amplitude,u0,uL,min_u,max_u,mass") != std::string::npos);
    CHECK(fs::exists(out / "state_chi_6.csv"));
    const std::string snap = slurp(out / "state_chi_6.csv");
    CHECK(snap.find("x,u,v") != std::string::npos);
}

TEST_CASE("simulate emits a time series") {
    const fs::path out = fresh_dir("simulate");
    CHECK(run_cli({"simulate", "--chi", "2", "--N", "64", "--dt", "0.001", "--t-final", "2",
                   "--eps", "0.001", "--out", out.string()}) == 0);
    const std::string csv = slurp(out / "timeseries.csv");
    CHECK(csv.find("t,norm_u,norm_v,min_u,u0") != std::string::npos);
}

TEST_CASE("selftest passes on the default configuration") {
    CHECK(run_cli({"selftest"}) == 0);
}
