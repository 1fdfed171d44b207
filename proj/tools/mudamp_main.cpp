#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mudamp/evaluation.hpp"
#include "mudamp/io.hpp"
#include "mudamp/mu.hpp"
#include "mudamp/plant_family.hpp"
#include "mudamp/synthesis.hpp"
#include "mudamp/uncertainty.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mudamp;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDbFloor = -400.0;

struct Run {
    json config;  // effective config: file contents plus CLI overrides
    std::string out;
    std::string hash;  // FNV-1a of the canonical config dump
};

double jget(const json& j, const char* key, double dflt) {
    return j.contains(key) ? j.at(key).get<double>() : dflt;
}

int jint(const json& j, const char* key, int dflt) {
    return j.contains(key) ? j.at(key).get<int>() : dflt;
}

std::uint64_t juint(const json& j, const char* key, std::uint64_t dflt) {
    return j.contains(key) ? j.at(key).get<std::uint64_t>() : dflt;
}

std::vector<double> jvec(const json& j, const char* key, std::vector<double> dflt) {
    if (!j.contains(key)) return dflt;
    return j.at(key).get<std::vector<double>>();
}

json load_json_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw Error(std::string(what) + " not found: " + path);
    return json::parse(read_text_file(path));
}

FamilyConfig family_from_json(const json& f) {
    FamilyConfig fc;
    fc.f0_hz = jvec(f, "f0_hz", fc.f0_hz);
    fc.f100_hz = jvec(f, "f100_hz", fc.f100_hz);
    fc.pole_damping = jvec(f, "pole_damping", fc.pole_damping);
    fc.heavy_payload_g = jget(f, "heavy_payload_g", fc.heavy_payload_g);
    fc.payloads_g = jvec(f, "payloads_g", fc.payloads_g);
    fc.near_cancel_ratio = jget(f, "near_cancel_ratio", fc.near_cancel_ratio);
    fc.interlace_ratio = jget(f, "interlace_ratio", fc.interlace_ratio);
    fc.actuator_freq_hz = jget(f, "actuator_freq_hz", fc.actuator_freq_hz);
    fc.actuator_damping = jget(f, "actuator_damping", fc.actuator_damping);
    fc.delay_s = jget(f, "delay_s", fc.delay_s);
    return fc;
}

json family_to_json(const FamilyConfig& fc) {
    json f;
    f["f0_hz"] = fc.f0_hz;
    f["f100_hz"] = fc.f100_hz;
    f["pole_damping"] = fc.pole_damping;
    f["heavy_payload_g"] = fc.heavy_payload_g;
    f["payloads_g"] = fc.payloads_g;
    f["near_cancel_ratio"] = fc.near_cancel_ratio;
    f["interlace_ratio"] = fc.interlace_ratio;
    f["actuator_freq_hz"] = fc.actuator_freq_hz;
    f["actuator_damping"] = fc.actuator_damping;
    f["delay_s"] = fc.delay_s;
    return f;
}

json grid_to_json(const json& g, const std::vector<double>& centers_hz) {
    json out;
    out["f_lo_hz"] = jget(g, "f_lo_hz", 1.0);
    out["f_hi_hz"] = jget(g, "f_hi_hz", 5000.0);
    out["points"] = jint(g, "points", 600);
    out["centers_hz"] = jvec(g, "centers_hz", centers_hz);
    out["per_mode"] = jint(g, "per_mode", 40);
    out["span_rel"] = jget(g, "span_rel", 0.10);
    return out;
}

FrequencyGrid grid_from_json(const json& g, const std::vector<double>& centers_hz) {
    const json r = grid_to_json(g, centers_hz);
    return FrequencyGrid::log_spaced_with_clusters(
        r.at("f_lo_hz").get<double>(), r.at("f_hi_hz").get<double>(), r.at("points").get<int>(),
        r.at("centers_hz").get<std::vector<double>>(), r.at("per_mode").get<int>(),
        r.at("span_rel").get<double>());
}

json tf_to_json(const RationalTF& tf) {
    json j;
    j["num"] = tf.num;
    j["den"] = tf.den;
    j["delay_s"] = tf.delay;
    return j;
}

RationalTF tf_from_json(const json& j) {
    return RationalTF(j.at("num").get<std::vector<double>>(),
                      j.at("den").get<std::vector<double>>(), jget(j, "delay_s", 0.0));
}

RationalTF controller_from_json(const json& j) {
    if (j.value("type", "rational") == "bandpass") {
        BandpassParams p;
        p.gain = j.at("gain").get<double>();
        p.zeta_c = j.at("zeta_c").get<double>();
        p.omega_c = j.at("omega_c").get<double>();
        p.order = j.at("order").get<int>();
        p.omega_d = j.at("omega_d").get<double>();
        return bandpass_tf(p);
    }
    return tf_from_json(j);
}

std::string payload_tag(double grams) { return format_double(grams) + "g"; }

double db_of(double mag) {
    if (!(mag > 0.0)) return kDbFloor;
    return std::max(kDbFloor, 20.0 * std::log10(mag));
}

// Shared by uncertainty/mu/synth/eval: rebuild the family and grid recorded
// by the family command.
struct FamilyArtifacts {
    FamilyConfig config;
    std::vector<PlantSample> members;
    FrequencyGrid grid;
    double noise_std_db = 0.0;
    std::uint64_t seed = 1;
};

FamilyArtifacts load_family(const Run& run) {
    const std::string path =
        run.config.value("manifest", run.out + "/family_manifest.json");
    const json m = load_json_file(path, "family manifest (run the family command first)");
    FamilyArtifacts fa;
    fa.config = family_from_json(m.at("family"));
    fa.members = nanopositioner_family(fa.config);
    fa.grid = grid_from_json(m.at("grid"), fa.config.f0_hz);
    fa.noise_std_db = jget(m, "noise_std_db", 0.0);
    fa.seed = juint(m, "seed", 1);
    return fa;
}

Variant run_variant(const Run& run) {
    return variant_from_name(run.config.value("variant", "m31"));
}

UncertainPlant build_variant_plant(const Run& run, const FamilyArtifacts& fa) {
    const json u = run.config.value("uncertainty", json::object());
    AssembleOptions ao;
    ao.residual_samples = jint(u, "residual_samples", ao.residual_samples);
    ao.seed = juint(run.config, "seed", 1);
    ao.fit_order = jint(u, "fit_order", ao.fit_order);
    ao.fit_margin = jget(u, "fit_margin", ao.fit_margin);
    const auto measured = synthesize_frf(fa.members, fa.grid, fa.noise_std_db, fa.seed);
    const auto stats = extract_mode_stats(fa.members);
    return assemble_uncertain_plant(stats, actuator_tf(fa.config), fa.config.delay_s,
                                    run_variant(run), fa.grid, measured, ao);
}

RationalTF weight_for(const Run& run, const UncertainPlant& plant) {
    SensitivityWeightSpec spec = default_weight_spec(plant);
    const json w = run.config.value("synth", json::object()).value("weight", json::object());
    spec.low_freq_cap_db = jget(w, "low_freq_cap_db", spec.low_freq_cap_db);
    spec.rolloff_db_per_decade = jget(w, "rolloff_db_per_decade", spec.rolloff_db_per_decade);
    if (w.contains("corner_hz")) spec.corner_omega = kTwoPi * w.at("corner_hz").get<double>();
    if (w.contains("notch_freqs_hz")) {
        const auto v = w.at("notch_freqs_hz").get<std::vector<double>>();
        for (std::size_t i = 0; i < 2 && i < v.size(); ++i) spec.notch_freqs[i] = kTwoPi * v[i];
    }
    if (w.contains("notch_depths_db")) {
        const auto v = w.at("notch_depths_db").get<std::vector<double>>();
        for (std::size_t i = 0; i < 2 && i < v.size(); ++i) spec.notch_depths_db[i] = v[i];
    }
    if (w.contains("notch_widths")) {
        const auto v = w.at("notch_widths").get<std::vector<double>>();
        for (std::size_t i = 0; i < 2 && i < v.size(); ++i) spec.notch_widths[i] = v[i];
    }
    return build_sensitivity_weight(spec);
}

void write_mu_csv(const std::string& path, const MuProfile& profile, const std::string& hash) {
    std::vector<std::vector<double>> rows;
    rows.reserve(profile.grid.size());
    for (std::size_t i = 0; i < profile.grid.size(); ++i)
        rows.push_back({profile.grid.points[i] / kTwoPi, profile.upper[i],
                        profile.lower.empty() ? 0.0 : profile.lower[i]});
    write_csv(path, {"config_hash=" + hash}, {"freq_hz", "mu_upper", "mu_lower"}, rows);
}

int cmd_family(const Run& run) {
    const json fam = run.config.value("family", json::object());
    const FamilyConfig fc = family_from_json(fam);
    const auto members = nanopositioner_family(fc);
    const FrequencyGrid grid =
        grid_from_json(run.config.value("grid", json::object()), fc.f0_hz);
    const double noise = jget(fam, "noise_std_db", 0.0);
    const std::uint64_t seed = juint(run.config, "seed", 1);
    const auto frfs = synthesize_frf(members, grid, noise, seed);

    json manifest;
    manifest["config_hash"] = run.hash;
    manifest["family"] = family_to_json(fc);
    manifest["grid"] = grid_to_json(run.config.value("grid", json::object()), fc.f0_hz);
    manifest["noise_std_db"] = noise;
    manifest["seed"] = seed;
    manifest["members"] = json::array();
    for (std::size_t i = 0; i < members.size(); ++i) {
        const std::string file = "frf_payload_" + payload_tag(members[i].payload_g) + ".csv";
        write_frf(run.out + "/" + file, grid, frfs[i], FrfFormat::ReIm,
                  {"config_hash=" + run.hash});
        json entry;
        entry["payload_g"] = members[i].payload_g;
        entry["frf"] = file;
        json modes = json::array();
        for (const ModePair& m : members[i].modes) {
            json mode;
            mode["pole_freq_hz"] = m.pole_freq / kTwoPi;
            mode["pole_damping"] = m.pole_damping;
            if (m.zero_freq) {
                mode["zero_freq_hz"] = *m.zero_freq / kTwoPi;
                mode["zero_damping"] = m.zero_damping;
            }
            modes.push_back(mode);
        }
        entry["modes"] = modes;
        manifest["members"].push_back(entry);
    }
    write_text_file(run.out + "/family_manifest.json", manifest.dump(2) + "\n");
    std::printf("family: wrote %zu FRF files and family_manifest.json to %s\n", members.size(),
                run.out.c_str());
    return 0;
}

int cmd_uncertainty(const Run& run) {
    const FamilyArtifacts fa = load_family(run);
    const UncertainPlant plant = build_variant_plant(run, fa);
    const std::string vname = variant_name(plant.variant);

    const json u = run.config.value("uncertainty", json::object());
    const EnvelopeBand band = envelope(plant, fa.grid, jint(u, "envelope_samples", 128), true,
                                       juint(run.config, "seed", 1));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fa.grid.size(); ++i)
        rows.push_back({fa.grid.points[i] / kTwoPi, band.min_db[i], band.max_db[i]});
    write_csv(run.out + "/envelope_" + vname + ".csv", {"config_hash=" + run.hash},
              {"freq_hz", "min_db", "max_db"}, rows);

    json model;
    model["config_hash"] = run.hash;
    model["variant"] = vname;
    model["delay_s"] = plant.delay_s;
    model["actuator"] = tf_to_json(plant.actuator);
    model["modes"] = json::array();
    static const char* kChannelNames[4] = {"d1", "d2", "n1", "n2"};
    for (const ModeBlock& mode : plant.modes) {
        json mj;
        mj["pole_freq_hz"] = mode.stats.nominal_mode().pole_freq / kTwoPi;
        json channels = json::object();
        for (int c = 0; c < 4; ++c) {
            if (!mode.active[c]) continue;
            channels[kChannelNames[c]] = tf_to_json(mode.weights.weight[c]);
        }
        mj["channels"] = channels;
        model["modes"].push_back(mj);
    }
    if (plant.unstructured) {
        json uw;
        uw["weight"] = tf_to_json(plant.unstructured->weight);
        uw["floor"] = plant.unstructured->floor;
        uw["scale"] = plant.unstructured->scale;
        uw["rms_log10"] = plant.unstructured->rms_log10;
        model["unstructured"] = uw;
    }
    model["structured_channels"] = plant.active_channels().size();
    write_text_file(run.out + "/uncertainty_" + vname + ".json", model.dump(2) + "\n");
    std::printf("uncertainty: %s has %zu structured channels; wrote envelope and model to %s\n",
                vname.c_str(), plant.active_channels().size(), run.out.c_str());
    return 0;
}

int cmd_mu(const Run& run) {
    const FamilyArtifacts fa = load_family(run);
    const UncertainPlant plant = build_variant_plant(run, fa);
    const std::string vname = variant_name(plant.variant);
    const json mcfg = run.config.value("mu", json::object());

    const std::string controller_path =
        mcfg.value("controller", run.out + "/controller_" + vname + ".json");
    const json cj = load_json_file(controller_path, "controller");
    const RationalTF controller = controller_from_json(cj);
    const RationalTF weight = cj.contains("weight") ? tf_from_json(cj.at("weight"))
                                                    : weight_for(run, plant);

    const FrequencyGrid grid = mcfg.contains("grid")
                                   ? grid_from_json(mcfg.at("grid"), fa.config.f0_hz)
                                   : mu_default_grid(plant);
    RobustPerformanceOptions opts;
    opts.mu.seed = juint(run.config, "seed", 1);
    const MuProfile profile = robust_performance_profile(plant, controller, weight, grid, opts);

    write_mu_csv(run.out + "/mu_" + vname + ".csv", profile, run.hash);
    json summary;
    summary["config_hash"] = run.hash;
    summary["variant"] = vname;
    summary["controller"] = controller_path;
    summary["mu_peak_upper"] = profile.peak_upper;
    summary["mu_peak_lower"] = profile.peak_lower;
    summary["argmax_freq_hz"] = profile.grid.points[profile.argmax] / kTwoPi;
    write_text_file(run.out + "/mu_" + vname + "_summary.json", summary.dump(2) + "\n");
    std::printf("mu: %s peak upper %.4f (lower %.4f) at %.1f Hz\n", vname.c_str(),
                profile.peak_upper, profile.peak_lower,
                profile.grid.points[profile.argmax] / kTwoPi);
    return 0;
}

int cmd_synth(const Run& run) {
    const FamilyArtifacts fa = load_family(run);
    const UncertainPlant plant = build_variant_plant(run, fa);
    const std::string vname = variant_name(plant.variant);
    const json s = run.config.value("synth", json::object());

    const int order = jint(s, "order", 2);
    ParamBounds bounds = default_param_bounds(plant, order);
    if (s.contains("gain_bounds")) {
        const auto v = s.at("gain_bounds").get<std::vector<double>>();
        bounds.gain = {v.at(0), v.at(1)};
        bounds.initial.gain = std::sqrt(v.at(0) * v.at(1));
    }
    if (s.contains("zeta_bounds")) {
        const auto v = s.at("zeta_bounds").get<std::vector<double>>();
        bounds.zeta_c = {v.at(0), v.at(1)};
        bounds.initial.zeta_c = 0.5 * (v.at(0) + v.at(1));
    }
    if (s.contains("omega_c_bounds_hz")) {
        const auto v = s.at("omega_c_bounds_hz").get<std::vector<double>>();
        bounds.omega_c = {kTwoPi * v.at(0), kTwoPi * v.at(1)};
        bounds.initial.omega_c = bounds.omega_c[0];
    }
    if (s.contains("omega_d_bounds_hz")) {
        const auto v = s.at("omega_d_bounds_hz").get<std::vector<double>>();
        bounds.omega_d = {kTwoPi * v.at(0), kTwoPi * v.at(1)};
        bounds.initial.omega_d = std::sqrt(bounds.omega_d[0] * bounds.omega_d[1]);
    }

    const RationalTF weight = weight_for(run, plant);
    SynthOptions so;
    so.nm.restarts = jint(s, "restarts", so.nm.restarts);
    so.nm.max_evals = jint(s, "max_evals", so.nm.max_evals);
    if (s.contains("objective_grid"))
        so.objective_grid = grid_from_json(s.at("objective_grid"), fa.config.f0_hz);
    if (s.contains("final_grid")) so.final_grid = grid_from_json(s.at("final_grid"), fa.config.f0_hz);
    so.mu.seed = juint(run.config, "seed", 1);
    so.final_mu.seed = so.mu.seed;

    const SynthResult result =
        synthesize(plant, weight, bounds, order, juint(run.config, "seed", 1), so);

    json cj;
    cj["config_hash"] = run.hash;
    cj["variant"] = vname;
    cj["type"] = "bandpass";
    cj["gain"] = result.params.gain;
    cj["zeta_c"] = result.params.zeta_c;
    cj["omega_c"] = result.params.omega_c;
    cj["order"] = result.params.order;
    cj["omega_d"] = result.params.omega_d;
    const RationalTF ctf = bandpass_tf(result.params);
    cj["num"] = ctf.num;
    cj["den"] = ctf.den;
    cj["weight"] = tf_to_json(weight);
    cj["objective"] = result.objective;
    cj["mu_peak_upper"] = result.profile.peak_upper;
    cj["mu_peak_lower"] = result.profile.peak_lower;
    cj["evaluations"] = result.evaluations;
    cj["wall_seconds"] = result.wall_seconds;
    write_text_file(run.out + "/controller_" + vname + ".json", cj.dump(2) + "\n");
    write_mu_csv(run.out + "/mu_" + vname + ".csv", result.profile, run.hash);

    const double threshold = jget(run.config, "threshold", 1.0);
    const bool certified = result.profile.peak_upper <= threshold;
    std::printf("synth: %s mu_peak %.4f threshold %.4f -> %s (%d evaluations, %.1f s)\n",
                vname.c_str(), result.profile.peak_upper, threshold,
                certified ? "certified" : "not certified", result.evaluations,
                result.wall_seconds);
    return certified ? 0 : 1;
}

int cmd_eval(const Run& run) {
    const FamilyArtifacts fa = load_family(run);
    const std::string vname = run.config.value("variant", "m31");
    const json e = run.config.value("eval", json::object());
    const std::string controller_path =
        e.value("controller", run.out + "/controller_" + vname + ".json");
    const RationalTF controller =
        controller_from_json(load_json_file(controller_path, "controller"));
    const RationalTF zero({0.0}, {1.0});

    json report;
    report["config_hash"] = run.hash;
    report["variant"] = vname;
    report["controller"] = controller_path;
    report["members"] = json::array();
    for (const PlantSample& member : fa.members) {
        const auto ps = process_sensitivity(member.tf, controller, fa.grid);
        const auto sxn = noise_sensitivity(member.tf, controller, fa.grid);
        const RationalTF loop = series(member.tf, controller);
        const auto lresp = freq_response(loop, fa.grid);

        std::vector<std::vector<double>> rows;
        double phase = std::arg(lresp[0]);
        for (std::size_t i = 0; i < fa.grid.size(); ++i) {
            if (i > 0) phase += std::arg(lresp[i] / lresp[i - 1]);
            rows.push_back({fa.grid.points[i] / kTwoPi, db_of(ps[i]), db_of(sxn[i]),
                            db_of(std::abs(lresp[i])), phase * 360.0 / kTwoPi});
        }
        const std::string tag = payload_tag(member.payload_g);
        write_csv(run.out + "/metrics_" + vname + "_payload_" + tag + ".csv",
                  {"config_hash=" + run.hash},
                  {"freq_hz", "ps_db", "sxn_db", "loop_db", "loop_phase_deg"}, rows);

        const MarginReport margins = phase_margins(loop, fa.grid);
        const auto open_mag = process_sensitivity(member.tf, zero, fa.grid);
        const double reduction =
            gain_reduction_at_mode(fa.grid, open_mag, ps, member.modes.at(0).pole_freq);
        json mj;
        mj["payload_g"] = member.payload_g;
        mj["stable"] = margins.stable;
        mj["gain_reduction_db"] = reduction;
        mj["crossings"] = json::array();
        for (const MarginCrossing& c : margins.crossings) {
            json cj;
            cj["freq_hz"] = c.omega / kTwoPi;
            cj["margin_deg"] = c.phase_margin_deg;
            mj["crossings"].push_back(cj);
        }
        report["members"].push_back(mj);
    }
    write_text_file(run.out + "/margins_" + vname + ".json", report.dump(2) + "\n");
    std::printf("eval: wrote %zu metric files and margins_%s.json to %s\n", fa.members.size(),
                vname.c_str(), run.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-domain robust control toolkit for payload-swept nanopositioners"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir = ".", variant_str;
    std::uint64_t seed = 0;
    double threshold = 1.0;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "seed override");
    auto* var_opt = app.add_option("--variant", variant_str, "uncertainty variant")
                        ->check(CLI::IsMember({"m01", "m11", "m31"}));
    auto* thr_opt = app.add_option("--threshold", threshold, "certification threshold (synth)");

    auto* c_family = app.add_subcommand("family", "generate the payload-swept plant family");
    auto* c_unc = app.add_subcommand("uncertainty", "build a variant's uncertainty model");
    auto* c_mu = app.add_subcommand("mu", "robust-performance mu profile for a controller");
    auto* c_synth = app.add_subcommand("synth", "fixed-structure mu synthesis");
    auto* c_eval = app.add_subcommand("eval", "closed-loop metrics across the family");

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg =
            config_path.empty() ? json::object() : load_json_file(config_path, "config");
        if (seed_opt->count()) cfg["seed"] = seed;
        if (var_opt->count()) cfg["variant"] = variant_str;
        if (thr_opt->count()) cfg["threshold"] = threshold;
        fs::create_directories(out_dir);
        const Run run{cfg, out_dir, hex64(fnv1a64(cfg.dump()))};
        if (c_family->parsed()) return cmd_family(run);
        if (c_unc->parsed()) return cmd_uncertainty(run);
        if (c_mu->parsed()) return cmd_mu(run);
        if (c_synth->parsed()) return cmd_synth(run);
        if (c_eval->parsed()) return cmd_eval(run);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    }
    return 2;
}
