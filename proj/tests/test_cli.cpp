#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "mudamp/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mudamp;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mudamp_cli_test";

int run(const std::string& args) {
    const std::string cmd =
        std::string(MUDAMP_BIN) + " " + args + " >" + (kRoot / "stdout.txt").string() + " 2>" +
        (kRoot / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string captured(const char* which) { return read_text_file((kRoot / which).string()); }

void write_config(const fs::path& path, const json& j) {
    write_text_file(path.string(), j.dump(2) + "\n");
}

json base_config() {
    json c;
    c["seed"] = 3;
    c["variant"] = "m31";
    c["grid"] = {{"points", 120}, {"per_mode", 8}};
    c["uncertainty"] = {{"envelope_samples", 32}};
    return c;
}

// Fraction of grid points where the first band is no wider than the second.
// Far below the modes both bands are sub-millidB, so ties are resolved at
// 0.01 dB rather than machine precision.
double narrower_ratio(const CsvTable& narrow, const CsvTable& wide) {
    REQUIRE(narrow.rows.size() == wide.rows.size());
    int narrower = 0;
    for (std::size_t i = 0; i < narrow.rows.size(); ++i) {
        const double wn = narrow.rows[i][2] - narrow.rows[i][1];
        const double ww = wide.rows[i][2] - wide.rows[i][1];
        if (wn <= ww + 0.01) ++narrower;
    }
    return double(narrower) / double(narrow.rows.size());
}

}  // namespace

TEST_CASE("family writes the full payload sweep and a manifest") {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write_config(kRoot / "config.json", base_config());
    const std::string cfg = " --config " + (kRoot / "config.json").string();

    CHECK(run("family" + cfg + " --out " + (kRoot / "a").string()) == 0);
    int frf_files = 0;
    for (const auto& ent : fs::directory_iterator(kRoot / "a"))
        if (ent.path().filename().string().rfind("frf_payload_", 0) == 0) ++frf_files;
    CHECK(frf_files == 11);

    const json manifest = json::parse(read_text_file((kRoot / "a/family_manifest.json").string()));
    CHECK(manifest.at("members").size() == 11);
    CHECK(manifest.at("members").at(0).at("payload_g").get<double>() == 0.0);
    CHECK(manifest.at("members").at(10).at("payload_g").get<double>() == 100.0);
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("family is byte-deterministic for a fixed config") {
    const std::string cfg = " --config " + (kRoot / "config.json").string();
    CHECK(run("family" + cfg + " --out " + (kRoot / "b").string()) == 0);
    CHECK(read_text_file((kRoot / "a/family_manifest.json").string()) ==
          read_text_file((kRoot / "b/family_manifest.json").string()));
    CHECK(read_text_file((kRoot / "a/frf_payload_50g.csv").string()) ==
          read_text_file((kRoot / "b/frf_payload_50g.csv").string()));
}

TEST_CASE("family with a single payload writes one FRF file") {
    json c = base_config();
    c["family"] = {{"payloads_g", {40.0}}};
    write_config(kRoot / "single.json", c);
    CHECK(run("family --config " + (kRoot / "single.json").string() + " --out " +
              (kRoot / "single").string()) == 0);
    int frf_files = 0;
    for (const auto& ent : fs::directory_iterator(kRoot / "single"))
        if (ent.path().filename().string().rfind("frf_payload_", 0) == 0) ++frf_files;
    CHECK(frf_files == 1);
    CHECK(fs::exists(kRoot / "single/frf_payload_40g.csv"));
}

TEST_CASE("uncertainty: m01 has zero structured channels, m31 envelope is narrower") {
    const std::string cfg = " --config " + (kRoot / "config.json").string();
    const std::string out = " --out " + (kRoot / "a").string();
    CHECK(run("uncertainty" + cfg + out + " --variant m01") == 0);
    CHECK(run("uncertainty" + cfg + out + " --variant m31") == 0);

    const json m01 = json::parse(read_text_file((kRoot / "a/uncertainty_m01.json").string()));
    const json m31 = json::parse(read_text_file((kRoot / "a/uncertainty_m31.json").string()));
    CHECK(m01.at("structured_channels").get<int>() == 0);
    CHECK(m31.at("structured_channels").get<int>() == 10);

    const CsvTable e01 = read_csv((kRoot / "a/envelope_m01.csv").string());
    const CsvTable e31 = read_csv((kRoot / "a/envelope_m31.csv").string());
    REQUIRE(e01.header == std::vector<std::string>{"freq_hz", "min_db", "max_db"});
    REQUIRE(!e01.comments.empty());
    CHECK(e01.comments[0].rfind("config_hash=", 0) == 0);
    CHECK(narrower_ratio(e31, e01) >= 0.95);
}

TEST_CASE("missing inputs give a clear error and exit code 2") {
    fs::create_directories(kRoot / "empty");
    CHECK(run("uncertainty --out " + (kRoot / "empty").string()) == 2);
    CHECK(captured("stderr.txt").find("family manifest") != std::string::npos);
    CHECK(run("mu --config " + (kRoot / "config.json").string() + " --out " +
              (kRoot / "a").string()) == 2);
    CHECK(captured("stderr.txt").find("controller") != std::string::npos);
}

TEST_CASE("synth rejects invalid bounds before any computation") {
    json c = base_config();
    c["synth"] = {{"gain_bounds", {10.0, 1.0}}};
    write_config(kRoot / "bad.json", c);
    CHECK(run("synth --config " + (kRoot / "bad.json").string() + " --out " +
              (kRoot / "a").string()) == 2);
    CHECK(!captured("stderr.txt").empty());
}

TEST_CASE("eval with a zero controller reproduces the plant magnitude") {
    json stub;
    stub["type"] = "rational";
    stub["num"] = {0.0};
    stub["den"] = {1.0};
    write_text_file((kRoot / "a/controller_m31.json").string(), stub.dump(2) + "\n");
    CHECK(run("eval --config " + (kRoot / "config.json").string() + " --out " +
              (kRoot / "a").string()) == 0);

    const CsvTable metrics = read_csv((kRoot / "a/metrics_m31_payload_0g.csv").string());
    REQUIRE(metrics.header == std::vector<std::string>{"freq_hz", "ps_db", "sxn_db", "loop_db",
                                                       "loop_phase_deg"});
    const CsvTable frf = read_csv((kRoot / "a/frf_payload_0g.csv").string());
    REQUIRE(metrics.rows.size() == frf.rows.size());
    for (std::size_t i = 0; i < metrics.rows.size(); i += 7) {
        const double mag = std::hypot(frf.rows[i][1], frf.rows[i][2]);
        CHECK(metrics.rows[i][1] == doctest::Approx(20.0 * std::log10(mag)).epsilon(1e-9));
        CHECK(metrics.rows[i][2] == -400.0);  // S_xn floor: |GC| = 0
    }

    const json margins = json::parse(read_text_file((kRoot / "a/margins_m31.json").string()));
    CHECK(margins.at("members").size() == 11);
    for (const auto& m : margins.at("members")) {
        CHECK(m.at("stable").get<bool>());             // open loop is stable
        CHECK(m.at("crossings").empty());              // |L| = 0 never crosses 0 dB
    }
}

TEST_CASE("synth smoke run writes a controller and mu profile with the exit contract") {
    json c = base_config();
    c["threshold"] = 50.0;
    c["synth"] = {{"restarts", 1},
                  {"max_evals", 10},
                  {"objective_grid", {{"points", 12}, {"per_mode", 2}}},
                  {"final_grid", {{"points", 16}, {"per_mode", 2}}}};
    write_config(kRoot / "smoke.json", c);
    const std::string cfg = " --config " + (kRoot / "smoke.json").string();
    const std::string out = " --out " + (kRoot / "smoke").string();
    CHECK(run("family" + cfg + out) == 0);
    CHECK(run("synth" + cfg + out) == 0);  // generous threshold: certified

    const json cj = json::parse(read_text_file((kRoot / "smoke/controller_m31.json").string()));
    CHECK(cj.at("type") == "bandpass");
    CHECK(cj.at("num").size() > 0);
    CHECK(cj.at("den").size() == 6);  // order-2 bandpass with damper: degree 5
    CHECK(cj.at("mu_peak_upper").get<double>() <= 50.0);
    CHECK(cj.at("mu_peak_upper").get<double>() > 0.0);

    const CsvTable mu = read_csv((kRoot / "smoke/mu_m31.csv").string());
    REQUIRE(mu.header == std::vector<std::string>{"freq_hz", "mu_upper", "mu_lower"});
    for (const auto& row : mu.rows) {
        CHECK(row[1] >= row[2] * (1.0 - 1e-9));  // upper >= lower
        CHECK(row[1] > 0.0);
    }

    // Same run against an unreachable threshold: uncertified exit code, file still written.
    CHECK(run("synth" + cfg + out + " --threshold 1e-6") == 1);
    CHECK(fs::exists(kRoot / "smoke/mu_m31.csv"));
}
