#pragma once

// Command-line front end: config ingestion, single-point reports, distance
// scans, the 404 km comparison and the oracle checks.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include "snstf/snstf.hpp"

namespace snstf::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kInvariant = 3 };

class UsageError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Constants echoed by the 404 km command for comparison.
inline constexpr double kMdi404kmBps = 3.2e-4;
inline constexpr double kReferenceSnsBps = 141.0;

struct Config
{
    ProtocolParams params;
    DeviceModel device = table1_device();
    Pipeline pipeline = Pipeline::FiniteKey;
    Variant variant = Variant::FourIntensity;
};

inline Config table1_preset()
{
    Config c;
    c.device = table1_device();
    return c;
}

/// Formats a double so that identical inputs give identical bytes.
inline std::string fmt(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10e", v);
    return buf;
}

inline double parse_number(const std::string& field, const std::string& text)
{
    std::string t = text;
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (t == "inf" || t == "+inf" || t == ".inf" || t == "infinity") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw std::invalid_argument(field + ": not a number: '" + text + "'");
    return v;
}

inline Variant parse_variant(const std::string& s)
{
    if (s == "3int") return Variant::ThreeIntensity;
    if (s == "4int") return Variant::FourIntensity;
    throw std::invalid_argument("variant: expected 3int or 4int, got '" + s + "'");
}

inline Pipeline parse_pipeline(const std::string& s)
{
    if (s == "asymptotic") return Pipeline::Asymptotic;
    if (s == "finite") return Pipeline::FiniteKey;
    throw std::invalid_argument("pipeline: expected asymptotic or finite, got '" + s + "'");
}

inline MisalignmentModel parse_misalignment(const std::string& s)
{
    if (s == "click-reroute") return MisalignmentModel::ClickReroute;
    if (s == "visibility") return MisalignmentModel::Visibility;
    throw std::invalid_argument("misalignment: expected click-reroute or visibility, got '" + s + "'");
}

inline Config preset(const std::string& name)
{
    if (name == "table1") return table1_preset();
    if (name == "404km") {
        Config c;
        c.device = device_404km();
        c.params.n_pairs = 6e14;
        return c;
    }
    throw std::invalid_argument("preset: unknown preset '" + name + "'");
}

/// Applies one key/value pair. Unknown keys are errors naming the key.
inline void apply_setting(Config& c, const std::string& key, const std::string& value)
{
    auto num = [&] { return parse_number(key, value); };
    static const std::map<std::string, double ProtocolParams::*> protocol{
        {"p_x", &ProtocolParams::p_x},   {"p_1", &ProtocolParams::p_1},  {"p_2", &ProtocolParams::p_2},
        {"p_z", &ProtocolParams::p_z},   {"mu1", &ProtocolParams::mu1},  {"mu2", &ProtocolParams::mu2},
        {"mu_z", &ProtocolParams::mu_z}, {"delta", &ProtocolParams::delta_slice},
    };
    static const std::map<std::string, double DeviceModel::*> device{
        {"p_d", &DeviceModel::p_d},
        {"eta_d", &DeviceModel::eta_d},
        {"e_a", &DeviceModel::e_a},
        {"loss_db_per_km", &DeviceModel::loss_db_per_km},
        {"distance_km", &DeviceModel::distance_km},
        {"f_ec", &DeviceModel::f_ec},
        {"epsilon", &DeviceModel::epsilon},
    };
    if (auto it = protocol.find(key); it != protocol.end()) {
        c.params.*(it->second) = num();
    } else if (auto jt = device.find(key); jt != device.end()) {
        c.device.*(jt->second) = num();
    } else if (key == "n_pairs") {
        c.params.n_pairs = num();
        if (std::isinf(c.params.n_pairs)) c.pipeline = Pipeline::Asymptotic;
    } else if (key == "misalignment") {
        c.device.misalignment = parse_misalignment(value);
    } else if (key == "pipeline") {
        c.pipeline = parse_pipeline(value);
    } else if (key == "variant") {
        c.variant = parse_variant(value);
    } else {
        throw std::invalid_argument(key + ": unknown configuration key");
    }
}

/// Reads a flat YAML mapping of scalar settings. A `preset` key, when
/// present, is applied first regardless of its position.
inline Config load_config(const std::string& path, Config base = table1_preset())
{
    std::ifstream probe(path);
    if (!probe) throw IoError("config: cannot open '" + path + "'");
    YAML::Node root;
    try {
        root = YAML::Load(probe);
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument("config: malformed YAML: " + std::string(e.what()));
    }
    if (root.IsNull()) return base;
    if (!root.IsMap()) throw std::invalid_argument("config: top level must be a key/value mapping");

    if (const auto p = root["preset"]) {
        if (!p.IsScalar()) throw std::invalid_argument("preset: must be a scalar");
        base = preset(p.as<std::string>());
    }
    for (const auto& kv : root) {
        const std::string key = kv.first.as<std::string>();
        if (key == "preset") continue;
        if (!kv.second.IsScalar()) throw std::invalid_argument(key + ": must be a scalar");
        apply_setting(base, key, kv.second.as<std::string>());
    }
    return base;
}

/// Inclusive range "a:b:step".
inline std::vector<double> parse_range(const std::string& text)
{
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("distance-range: expected a:b:step");
    const double a = parse_number("distance-range", parts[0]);
    const double b = parse_number("distance-range", parts[1]);
    const double step = parse_number("distance-range", parts[2]);
    if (!(step > 0.0) || !(b >= a) || !(a >= 0.0) || !std::isfinite(b))
        throw std::invalid_argument("distance-range: need 0 <= a <= b and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
    if (n > 100000) throw std::invalid_argument("distance-range: too many points");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a + step * static_cast<double>(i);
    return out;
}

// ---------------------------------------------------------------- reports

inline KeyRateReport evaluate_point(const Config& c)
{
    if (c.pipeline == Pipeline::Asymptotic) return asymptotic_pipeline(c.params, c.device, c.variant);
    return finite_key_pipeline(c.params, c.device, c.variant);
}

inline void write_report(std::ostream& os, const Config& c, const KeyRateReport& r)
{
    auto line = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
    line("pipeline", to_string(c.pipeline));
    line("variant", to_string(c.variant));
    line("misalignment", to_string(c.device.misalignment));
    line("distance_km", fmt(c.device.distance_km));
    line("n_pairs", c.pipeline == Pipeline::Asymptotic ? "inf" : fmt(c.params.n_pairs));
    line("p_x", fmt(c.params.p_x));
    line("p_1", fmt(c.params.p_1));
    line("p_2", fmt(c.params.p_2));
    line("p_z", fmt(c.params.p_z));
    line("mu1", fmt(c.params.mu1));
    line("mu2", fmt(c.params.mu2));
    line("mu_z", fmt(c.params.mu_z));
    line("delta", fmt(c.params.delta_slice));
    line("rate_per_pulse", fmt(r.rate_per_pulse));
    line("raw_rate", fmt(r.raw_rate));
    line("key_length", fmt(r.key_length));
    line("raw_key_length", fmt(r.raw_key_length));
    line("a1", fmt(r.a1));
    line("q1", fmt(r.q1));
    line("s1z_lower", fmt(r.s1z_lower));
    line("s1z_lower_raw", fmt(r.s1z_lower_raw));
    line("bound_source", r.bound_source);
    line("t_delta", fmt(r.t_delta));
    line("s00", fmt(r.s00));
    line("s00_lower", fmt(r.s00_lower));
    line("s00_upper", fmt(r.s00_upper));
    line("e1ph_upper", fmt(r.e1ph_upper));
    line("e1ph_upper_raw", fmt(r.e1ph_upper_raw));
    line("s1_used", fmt(r.s1_used));
    line("e1ph_used", fmt(r.e1ph_used));
    line("s_z", fmt(r.s_z));
    line("e_z", fmt(r.e_z));
    line("n1", fmt(r.n1));
    line("n_t", fmt(r.n_t));
    line("delta_s1", fmt(r.delta_s1));
    line("delta_s1_prime", fmt(r.delta_s1_prime));
    line("delta_s2", fmt(r.delta_s2));
    line("delta_s2_prime", fmt(r.delta_s2_prime));
    line("delta_s00", fmt(r.delta_s00));
    line("delta_s00_prime", fmt(r.delta_s00_prime));
    // The observed-population deviations are a constructed choice, so the
    // report names the construction next to the values.
    line("delta_1c", fmt(r.delta_1c));
    line("delta_1c_prime", fmt(r.delta_1c_prime));
    line("delta_1c_construction", "chernoff-on-expected-single-photon-count");
    line("s1_clamped", flag(r.s1_clamped));
    line("e1ph_clamped", flag(r.e1ph_clamped));
    line("e1ph_undefined", flag(r.e1ph_undefined));
    line("rate_clamped", flag(r.rate_clamped));
}

// ------------------------------------------------------------------ scans

/// One curve of a scan: a variant at a number of pulse pairs (inf for the
/// asymptotic pipeline).
struct ScanConfig
{
    Variant variant = Variant::FourIntensity;
    double n_pairs = 1e12;

    bool asymptotic() const { return std::isinf(n_pairs); }
    std::string label() const
    {
        char buf[32];
        if (asymptotic())
            std::snprintf(buf, sizeof buf, "asymptotic");
        else
            std::snprintf(buf, sizeof buf, "N=%.0e", n_pairs);
        return std::string(to_string(variant)) + "/" + buf;
    }
};

/// `a` can seed `b`: b's rate at a's optimum is at least a's rate.
inline bool dominated_by(const ScanConfig& a, const ScanConfig& b)
{
    const bool variant_ok = a.variant == b.variant || a.variant == Variant::ThreeIntensity;
    return variant_ok && a.n_pairs <= b.n_pairs;
}

inline std::vector<ScanConfig> figure_configs(int figure)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (figure) {
        case 1:
            return {{Variant::FourIntensity, 1e12},
                    {Variant::FourIntensity, 1e13},
                    {Variant::FourIntensity, 1e14},
                    {Variant::FourIntensity, inf}};
        case 2:
            return {{Variant::ThreeIntensity, 1e12}, {Variant::FourIntensity, 1e12}, {Variant::FourIntensity, inf}};
        case 3:
            return {{Variant::FourIntensity, 1e12}};
        default:
            throw std::invalid_argument("figure: expected 1, 2 or 3");
    }
}

struct ScanSettings
{
    DeviceModel device = table1_device();
    std::vector<double> distances;
    std::vector<ScanConfig> configs;
    int restarts = 32;
    int budget = 3000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

struct ScanCurve
{
    ScanConfig config;
    std::vector<ScanRow> rows;
};

/// Runs every curve. Curves are computed in (variant, N) order and each
/// optimum seeds the curves that dominate it, so the rate ordering between
/// curves holds at every distance by construction. Returned curves follow
/// the input order.
inline std::vector<ScanCurve> run_scan(const ScanSettings& s)
{
    std::vector<double> distances = s.distances;
    std::sort(distances.begin(), distances.end());
    std::vector<std::size_t> order(s.configs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = s.configs[a];
        const auto& cb = s.configs[b];
        if (ca.variant != cb.variant) return ca.variant == Variant::ThreeIntensity;
        return ca.n_pairs < cb.n_pairs;
    });

    std::vector<ScanCurve> curves(s.configs.size());
    std::vector<bool> done(s.configs.size(), false);
    for (std::size_t idx : order) {
        const ScanConfig& cfg = s.configs[idx];
        OptimizationProblem p;
        p.device = s.device;
        p.pipeline = cfg.asymptotic() ? Pipeline::Asymptotic : Pipeline::FiniteKey;
        p.variant = cfg.variant;
        p.n_pairs = cfg.asymptotic() ? 1e12 : cfg.n_pairs;
        p.restarts = s.restarts;
        p.budget = s.budget;
        p.seed = s.seed;
        p.threads = s.threads;

        std::vector<std::vector<ProtocolParams>> seeds(distances.size());
        bool any = false;
        for (std::size_t j = 0; j < s.configs.size(); ++j) {
            if (!done[j] || !dominated_by(s.configs[j], cfg)) continue;
            for (std::size_t d = 0; d < distances.size(); ++d) seeds[d].push_back(curves[j].rows[d].result.params);
            any = true;
        }
        curves[idx].config = cfg;
        curves[idx].rows = any ? scan_distance(p, distances, seeds) : scan_distance(p, distances);
        done[idx] = true;
    }
    return curves;
}

inline const char* kScanHeader =
    "distance_km,configuration,variant,pipeline,n_pairs,rate_per_pulse,rep_rate_hz,bits_per_second,"
    "p_x,p_1,p_2,p_z,mu1,mu2,mu_z,delta,s1z_lower,e1ph_upper,e_z,bound_source,zero_rate,budget_exhausted,"
    "evaluations";

/// CSV rows ordered by distance, then by curve order.
inline void write_scan_csv(std::ostream& os, const std::vector<ScanCurve>& curves, std::optional<double> rep_rate_hz)
{
    os << kScanHeader << '\n';
    if (curves.empty()) return;
    const std::size_t rows = curves.front().rows.size();
    for (std::size_t i = 0; i < rows; ++i) {
        for (const auto& c : curves) {
            const ScanRow& row = c.rows[i];
            const auto& r = row.result;
            os << fmt(row.distance_km) << ',' << c.config.label() << ',' << to_string(c.config.variant) << ','
               << (c.config.asymptotic() ? "asymptotic" : "finite") << ','
               << (c.config.asymptotic() ? std::string("inf") : fmt(c.config.n_pairs)) << ','
               << fmt(r.report.rate_per_pulse) << ',' << (rep_rate_hz ? fmt(*rep_rate_hz) : "") << ','
               << (rep_rate_hz ? fmt(r.report.rate_per_pulse * *rep_rate_hz) : "") << ',' << fmt(r.params.p_x)
               << ',' << fmt(r.params.p_1) << ',' << fmt(r.params.p_2) << ',' << fmt(r.params.p_z) << ','
               << fmt(r.params.mu1) << ',' << fmt(r.params.mu2) << ',' << fmt(r.params.mu_z) << ','
               << fmt(r.params.delta_slice) << ',' << fmt(r.report.s1z_lower) << ',' << fmt(r.report.e1ph_upper)
               << ',' << fmt(r.report.e_z) << ',' << r.report.bound_source << ',' << (r.zero_rate ? 1 : 0) << ','
               << (r.budget_exhausted ? 1 : 0) << ',' << r.evaluations << '\n';
        }
    }
}

// ------------------------------------------------------------------ 404 km

struct Run404Settings
{
    Config config = preset("404km");
    int restarts = 32;
    int budget = 3000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

inline OptimizationResult run_404km(const Run404Settings& s)
{
    OptimizationProblem p;
    p.device = s.config.device;
    p.pipeline = Pipeline::FiniteKey;
    p.variant = Variant::FourIntensity;
    p.n_pairs = s.config.params.n_pairs;
    p.restarts = s.restarts;
    p.budget = s.budget;
    p.seed = s.seed;
    p.threads = s.threads;
    return optimize(p);
}

// ------------------------------------------------------------ oracle check

struct InvariantResult
{
    std::string name;
    bool pass = true;
    std::string detail;
};

struct OracleSettings
{
    Config config = table1_preset();
    double samples = 1e6;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    /// Negative control: the sampler runs without misalignment while the
    /// expected values keep the configured e_a.
    bool corrupt_misalignment = false;
    double sigmas = 5.0;
};

inline constexpr double kMinOracleSamples = 1e6;

/// Exactly-one-click probability of a single photon entering the
/// interferometer; misalignment only swaps the detector.
inline double single_photon_yield(const DeviceModel& device)
{
    const double eta = arm_transmittance(device).eta;
    const double pd = device.p_d;
    return eta * (1.0 - pd) + (1.0 - eta) * 2.0 * pd * (1.0 - pd);
}

inline std::vector<InvariantResult> oracle_check(const OracleSettings& s)
{
    if (!(s.samples >= kMinOracleSamples)) throw UsageError("samples: oracle check needs at least 1e6 pulse pairs");
    if (s.samples > 1e9 || s.samples != std::floor(s.samples))
        throw UsageError("samples: must be an integer <= 1e9");

    std::vector<InvariantResult> out;
    ProtocolParams params = s.config.params;
    params.n_pairs = s.samples;
    validate(params);
    validate(s.config.device);

    DeviceModel sampler_device = s.config.device;
    if (s.corrupt_misalignment) sampler_device.e_a = 0.0;
    const Observables expected = expected_observables(params, s.config.device);
    const Observables sampled = monte_carlo_observables(params, sampler_device, s.seed, s.threads);
    for (const auto& d : count_deviations(expected, sampled)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "sampled %.0f expected %.3f z %+.3f", d.sampled, d.expected, d.z);
        out.push_back({"mc-vs-expected:" + d.name, std::abs(d.z) <= s.sigmas, buf});
    }

    // Chernoff coverage on Poisson counts at epsilon = 0.01.
    constexpr double eps = 0.01;
    const int trials = static_cast<int>(std::min(1e5, s.samples / 50.0));
    std::mt19937_64 rng(splitmix64(s.seed ^ 0xC0FFEEULL));
    for (double mean : {5.0, 50.0, 5e3, 5e5}) {
        std::poisson_distribution<long long> pois(mean);
        int covered = 0;
        for (int t = 0; t < trials; ++t) {
            const auto ci = chernoff_interval(static_cast<double>(pois(rng)), eps);
            if (ci.mean_lower <= mean && mean <= ci.mean_upper) ++covered;
        }
        const double coverage = static_cast<double>(covered) / trials;
        char name[64], buf[96];
        std::snprintf(name, sizeof name, "chernoff-coverage:mean=%g", mean);
        std::snprintf(buf, sizeof buf, "coverage %.5f over %d trials", coverage, trials);
        out.push_back({name, coverage >= 1.0 - eps, buf});
    }

    // Decoy soundness at the configured point.
    const bool three = params.p_2 == 0.0;
    const KeyRateReport r =
        asymptotic_pipeline(params, s.config.device, three ? Variant::ThreeIntensity : Variant::FourIntensity);
    const double y1 = single_photon_yield(s.config.device);
    char buf[96];
    std::snprintf(buf, sizeof buf, "s1z_lower %.6e true %.6e", r.s1z_lower, y1);
    out.push_back({"decoy-soundness:s1z_lower", r.s1z_lower <= y1 * (1.0 + 1e-12), buf});
    return out;
}

// -------------------------------------------------------------------- main

inline void write_output(const std::optional<std::string>& path, std::ostream& out, const std::string& text)
{
    if (!path) {
        out << text;
        return;
    }
    std::ofstream f(*path, std::ios::binary);
    if (!f) throw IoError("out: cannot open '" + *path + "' for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("out: write to '" + *path + "' failed");
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Sending-or-not-sending twin-field QKD key-rate calculator"};
    app.require_subcommand(1);

    std::optional<std::string> config_path, preset_name, out_path, pipeline_name, distance_range;
    std::vector<double> distances;
    std::vector<std::string> variants, pairs;
    std::optional<double> rep_rate_hz;
    std::uint64_t seed = 1;
    int restarts = 32;
    int budget = 3000;
    unsigned threads = 0;
    int figure = 0;
    double samples = kMinOracleSamples;
    bool corrupt = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "YAML key/value configuration file");
        sub->add_option("--preset", preset_name, "named preset (table1, 404km)");
        sub->add_option("--distance", distances, "distance in km (repeatable)");
        sub->add_option("--pipeline", pipeline_name, "asymptotic or finite");
        sub->add_option("--variant", variants, "3int or 4int (repeatable)");
        sub->add_option("--pairs", pairs, "number of pulse pairs N, or inf (repeatable)");
        sub->add_option("--rep-rate-hz", rep_rate_hz, "repetition rate for bits-per-second output");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out_path, "output path");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    };
    auto search = [&](CLI::App* sub) {
        sub->add_option("--restarts", restarts, "optimizer restarts")->check(CLI::NonNegativeNumber);
        sub->add_option("--budget", budget, "objective evaluations per start")->check(CLI::PositiveNumber);
    };

    CLI::App* rate = app.add_subcommand("rate", "evaluate one parameter point");
    common(rate);
    CLI::App* scan = app.add_subcommand("scan", "optimize over a distance range");
    common(scan);
    search(scan);
    scan->add_option("--distance-range", distance_range, "a:b:step in km, inclusive");
    scan->add_option("--figure", figure, "preset curve family: 1, 2 or 3");
    CLI::App* far = app.add_subcommand("404km", "optimized finite-key rate over 404 km of ultralow-loss fiber");
    common(far);
    search(far);
    CLI::App* oracle = app.add_subcommand("oracle-check", "Monte Carlo and coverage checks");
    common(oracle);
    oracle->add_option("--samples", samples, "Monte Carlo pulse pairs (>= 1e6)");
    oracle->add_flag("--corrupt-misalignment", corrupt, "negative control: sample without misalignment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "error: " << e.what() << '\n';
        return kValidation;
    }

    try {
        Config cfg = preset_name ? preset(*preset_name) : (far->parsed() ? preset("404km") : table1_preset());
        if (config_path) cfg = load_config(*config_path, cfg);
        if (pipeline_name) cfg.pipeline = parse_pipeline(*pipeline_name);
        std::vector<double> pair_values;
        for (const auto& p : pairs) {
            const double v = parse_number("pairs", p);
            if (!(v > 0.0)) throw std::invalid_argument("pairs: must be > 0");
            pair_values.push_back(v);
        }
        if (pipeline_name && cfg.pipeline == Pipeline::Asymptotic)
            for (double v : pair_values)
                if (std::isfinite(v)) throw std::invalid_argument("pipeline/pairs: asymptotic pipeline with finite N");
        std::vector<Variant> variant_values;
        for (const auto& v : variants) variant_values.push_back(parse_variant(v));

        if (rate->parsed()) {
            if (pair_values.size() > 1 || variant_values.size() > 1 || distances.size() > 1)
                throw UsageError("rate: evaluates a single point");
            if (!pair_values.empty()) {
                cfg.params.n_pairs = pair_values[0];
                cfg.pipeline = std::isinf(pair_values[0]) ? Pipeline::Asymptotic : Pipeline::FiniteKey;
            }
            if (!variant_values.empty()) cfg.variant = variant_values[0];
            if (!distances.empty()) cfg.device.distance_km = distances[0];
            if (cfg.variant == Variant::ThreeIntensity) cfg.params.p_2 = 0.0;
            const KeyRateReport report = evaluate_point(cfg);
            std::ostringstream os;
            write_report(os, cfg, report);
            if (rep_rate_hz) {
                os << "rep_rate_hz = " << fmt(*rep_rate_hz) << '\n';
                os << "bits_per_second = " << fmt(report.rate_per_pulse * *rep_rate_hz) << '\n';
            }
            write_output(out_path, out, os.str());
            return kOk;
        }

        if (scan->parsed()) {
            ScanSettings s;
            s.device = cfg.device;
            s.restarts = restarts;
            s.budget = budget;
            s.seed = seed;
            s.threads = threads;
            if (distance_range && !distances.empty())
                throw UsageError("distance/distance-range: give one or the other");
            if (distance_range)
                s.distances = parse_range(*distance_range);
            else if (!distances.empty())
                s.distances = distances;
            else if (figure)
                s.distances = parse_range("0:450:25");
            else
                s.distances = {cfg.device.distance_km};
            for (double d : s.distances)
                if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("distance: must be finite and >= 0");

            if (figure) {
                if (!variant_values.empty() || !pair_values.empty() || pipeline_name)
                    throw UsageError("figure: fixes variants and pairs; drop --variant/--pairs/--pipeline");
                s.configs = figure_configs(figure);
            } else {
                if (variant_values.empty()) variant_values.push_back(cfg.variant);
                if (pair_values.empty())
                    pair_values.push_back(cfg.pipeline == Pipeline::Asymptotic ? std::numeric_limits<double>::infinity()
                                                                               : cfg.params.n_pairs);
                for (Variant v : variant_values)
                    for (double n : pair_values) s.configs.push_back({v, n});
            }
            std::ostringstream os;
            write_scan_csv(os, run_scan(s), rep_rate_hz);
            write_output(out_path, out, os.str());
            return kOk;
        }

        if (far->parsed()) {
            Run404Settings s;
            s.config = cfg;
            if (!pair_values.empty()) {
                if (pair_values.size() > 1 || std::isinf(pair_values[0]))
                    throw UsageError("pairs: 404km takes one finite N");
                s.config.params.n_pairs = pair_values[0];
            }
            if (!distances.empty()) s.config.device.distance_km = distances.back();
            s.restarts = restarts;
            s.budget = budget;
            s.seed = seed;
            s.threads = threads;
            const OptimizationResult r = run_404km(s);
            Config shown = s.config;
            shown.params = r.params;
            shown.pipeline = Pipeline::FiniteKey;
            shown.variant = Variant::FourIntensity;
            std::ostringstream os;
            write_report(os, shown, r.report);
            os << "evaluations = " << r.evaluations << '\n';
            os << "reference_sns_bps = " << fmt(kReferenceSnsBps) << '\n';
            os << "reference_mdi_experiment_bps = " << fmt(kMdi404kmBps) << '\n';
            if (rep_rate_hz) {
                const double bps = r.report.rate_per_pulse * *rep_rate_hz;
                os << "assumed_rep_rate_hz = " << fmt(*rep_rate_hz) << '\n';
                os << "bits_per_second = " << fmt(bps) << '\n';
                os << "ratio_to_mdi_experiment = " << fmt(bps / kMdi404kmBps) << '\n';
                os << "ratio_to_reference_sns = " << fmt(bps / kReferenceSnsBps) << '\n';
            } else {
                os << "assumed_rep_rate_hz = none (pass --rep-rate-hz for bits per second)\n";
            }
            write_output(out_path, out, os.str());
            return kOk;
        }

        OracleSettings s;
        s.config = cfg;
        if (!distances.empty()) s.config.device.distance_km = distances[0];
        s.samples = samples;
        s.seed = seed;
        s.threads = threads;
        s.corrupt_misalignment = corrupt;
        const auto results = oracle_check(s);
        std::ostringstream os;
        int failures = 0;
        for (const auto& r : results) {
            os << (r.pass ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
            failures += r.pass ? 0 : 1;
        }
        os << (failures ? "FAIL" : "PASS") << " oracle-check: " << failures << " violation(s) out of "
           << results.size() << '\n';
        write_output(out_path, out, os.str());
        return failures ? kInvariant : kOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    }
}

}  // namespace snstf::cli
