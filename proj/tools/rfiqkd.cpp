// rfiqkd: simulate count matrices, analyze them, sweep a waveplate, and
// estimate the photon-number-splitting penalty.

#include "rfiqkd/estimation.hpp"
#include "rfiqkd/keyrates.hpp"
#include "rfiqkd/postprocess.hpp"
#include "rfiqkd/simulator.hpp"
#include "rfiqkd/sweep.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

using namespace rfiqkd;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path);
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("cannot write " + path);
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

std::uint64_t env_seed() {
    const char* s = std::getenv("RFIQKD_SEED");
    if (!s || !*s) return 1;
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("RFIQKD_SEED is not an integer");
    return v;
}

struct RunConfig {
    SourceConfig source;
    ChannelConfig channel;
    DetectorConfig detector;
    DeviceParams device = ideal_params();
};

DeviceParams device_from_config(const json& j) {
    if (j.contains("device") && j.contains("optics")) {
        throw std::invalid_argument("config: give either device or optics, not both");
    }
    if (j.contains("device")) return j.at("device").get<DeviceParams>();
    if (!j.contains("optics")) return ideal_params();
    const json& o = j.at("optics");
    if (o.is_string()) {
        const std::string name = o.get<std::string>();
        if (name == "ideal") return device_from_optics(OpticsSpec{}, ideal_receiver_optics());
        if (name == "lab") return device_from_optics(lab_emitter_optics(), lab_receiver_optics());
        throw std::invalid_argument("config: unknown optics preset '" + name + "'");
    }
    const OpticsSpec emitter = o.value("emitter", json::object()).get<OpticsSpec>();
    OpticsSpec receiver = ideal_receiver_optics();
    if (o.contains("receiver")) {
        json r = receiver;
        r.update(o.at("receiver"));
        receiver = r.get<OpticsSpec>();
    }
    return device_from_optics(emitter, receiver);
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_flag) {
    const json j = read_json(path);
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    RunConfig c;
    json src = j.value("source", json::object());
    if (seed_flag) {
        src["seed"] = *seed_flag;
    } else if (!src.contains("seed")) {
        src["seed"] = env_seed();
    }
    c.source = src.get<SourceConfig>();
    c.channel = j.value("channel", json::object()).get<ChannelConfig>();
    c.detector = j.value("detector", json::object()).get<DetectorConfig>();
    c.device = device_from_config(j);
    return c;
}

CountMatrix load_counts(const std::string& path) {
    const std::string text = read_file(path);
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
        std::istringstream in(text);
        return count_matrix_from_csv(in);
    }
    try {
        return count_matrix_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config, output = "-", events, mode = "pulse";
    std::optional<std::uint64_t> seed;
};

void cmd_simulate(const SimulateArgs& a) {
    const RunConfig c = load_config(a.config, a.seed);
    if (a.mode == "multinomial") {
        if (!a.events.empty()) throw std::invalid_argument("--events needs --mode pulse");
        const CountMatrix m = sample_counts(c.device, c.source, c.channel, c.detector);
        write_file(a.output, count_matrix_to_json(m).dump(2) + "\n");
        return;
    }
    const SimulationOutput out = simulate_counts(c.device, c.source, c.channel, c.detector);
    write_file(a.output, count_matrix_to_json(out.counts).dump(2) + "\n");
    if (!a.events.empty()) write_file(a.events, events_to_csv(out.events));
}

struct AnalyzeArgs {
    std::string input, output = "-", protocol = "all";
    double sigma = 3.0;
    int starts = 16;
    double ec = 1.0;
    std::optional<std::uint64_t> seed;
};

void cmd_analyze(const AnalyzeArgs& a) {
    const CountMatrix m = load_counts(a.input);
    const ConstraintSet cs = constraints(m);
    const bool all = a.protocol == "all";
    json report;
    report["input"] = a.input;
    report["constraints"] = constraints_to_json(cs);
    const double q = std::clamp((1.0 - cs.C(2, 2)) / 2.0, 0.0, 1.0);
    const double big_c = quantity_C(cs.C);
    report["qber"] = q;
    report["C"] = big_c;
    json rates;
    if (all || a.protocol == "bb84") {
        json b;
        for (auto p : {CorrelatorPair::XX, CorrelatorPair::XY, CorrelatorPair::YX, CorrelatorPair::YY}) {
            b[to_string(p)] = bb84_rate_any_pair(cs.C, p);
        }
        rates["bb84"] = b;
    }
    if (all || a.protocol == "rfi") {
        const RfiRate r = rfi_rate(q, std::min(big_c, 2.0), a.ec);
        rates["rfi"] = {{"rate", r.rate}, {"status", to_string(r.status)}};
    }
    if (all || a.protocol == "urfi") {
        AnalysisConfig cfg;
        cfg.sigma = a.sigma;
        cfg.n_starts = a.starts;
        cfg.ec_efficiency = a.ec;
        cfg.seed = a.seed ? *a.seed : env_seed();
        cfg.validate();
        rates["urfi"] = keyrate_to_json(urfi_rate(cs, cfg));
    }
    report["rates"] = rates;
    write_file(a.output, report.dump(2) + "\n");
}

struct SweepArgs {
    std::string config, output = "-", matrices, mode = "multinomial";
    int angles = 24;
    double sigma = 3.0;
    std::optional<double> depolarization;
    int starts = 16;
    unsigned threads = 1;
    bool no_urfi = false;
    std::optional<std::uint64_t> seed;
};

void cmd_sweep(const SweepArgs& a) {
    const RunConfig c = load_config(a.config, a.seed);
    SweepConfig s;
    s.n_angles = a.angles;
    s.depolarization = a.depolarization ? *a.depolarization : c.channel.depolarization;
    s.pulse_level = a.mode == "pulse";
    s.compute_urfi = !a.no_urfi;
    s.analysis.sigma = a.sigma;
    s.analysis.n_starts = a.starts;
    s.analysis.seed = c.source.seed;
    s.threads = a.threads;
    const auto rows = run_sweep(c.device, c.source, c.detector, s);
    write_file(a.output, sweep_to_csv(rows));
    if (!a.matrices.empty()) write_file(a.matrices, sweep_matrices_to_json(rows).dump(2) + "\n");
}

void cmd_pns(const PnsConfig& cfg) {
    const PnsEstimate e = pns_reduction(cfg);
    const json out{{"multi_photon_rate", e.multi_photon_rate},
                   {"multi_photon_clicks", e.multi_photon_clicks},
                   {"tagged_bits", e.tagged_bits},
                   {"fraction_reduction", e.fraction_reduction}};
    std::cout << out.dump(2) << "\n";
}

void add_seed(CLI::App* cmd, std::optional<std::uint64_t>& seed) {
    cmd->add_option("--seed", seed, "RNG seed (default: config, then RFIQKD_SEED, then 1)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-frame-independent QKD simulator and key-rate analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate a run and write its count matrix");
    c_sim->add_option("config", sim.config, "JSON config")->required();
    c_sim->add_option("-o,--output", sim.output, "Count matrix JSON (- for stdout)");
    c_sim->add_option("--events", sim.events, "Event log CSV (pulse mode only)");
    c_sim->add_option("--mode", sim.mode, "pulse or multinomial")->check(CLI::IsMember({"pulse", "multinomial"}));
    add_seed(c_sim, sim.seed);

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze", "Key rates from a count matrix");
    c_an->add_option("counts", an.input, "Count matrix JSON or CSV")->required();
    c_an->add_option("-o,--output", an.output, "Report JSON (- for stdout)");
    c_an->add_option("--sigma", an.sigma, "Constraint width in standard deviations")->check(CLI::NonNegativeNumber);
    c_an->add_option("--protocol", an.protocol, "bb84, rfi, urfi or all")
        ->check(CLI::IsMember({"bb84", "rfi", "urfi", "all"}));
    c_an->add_option("--starts", an.starts, "Optimizer starting points")->check(CLI::PositiveNumber);
    c_an->add_option("--ec", an.ec, "Error-correction inefficiency factor");
    add_seed(c_an, an.seed);

    SweepArgs sw;
    auto* c_sw = app.add_subcommand("sweep", "Key rates over half-wave-plate angles");
    c_sw->add_option("config", sw.config, "JSON config")->required();
    c_sw->add_option("-o,--output", sw.output, "Sweep CSV (- for stdout)");
    c_sw->add_option("--matrices", sw.matrices, "Normalized count matrices per angle (JSON)");
    c_sw->add_option("--angles", sw.angles, "Angles over [0, 180) deg")->check(CLI::Range(2, 100000));
    c_sw->add_option("--sigma", sw.sigma, "Constraint width for r_urfi_sigma")->check(CLI::NonNegativeNumber);
    c_sw->add_option("--depolarization", sw.depolarization, "Overrides channel.depolarization");
    c_sw->add_option("--mode", sw.mode, "multinomial or pulse")->check(CLI::IsMember({"pulse", "multinomial"}));
    c_sw->add_option("--starts", sw.starts, "Optimizer starting points")->check(CLI::PositiveNumber);
    c_sw->add_option("--threads", sw.threads, "Angles evaluated concurrently")->check(CLI::PositiveNumber);
    c_sw->add_flag("--no-urfi", sw.no_urfi, "Skip the uncalibrated-device minimizations");
    add_seed(c_sw, sw.seed);

    PnsConfig pns;
    auto* c_pns = app.add_subcommand("pns", "Photon-number-splitting key reduction");
    c_pns->add_option("--rate", pns.pulse_rate, "Pulse rate (Hz)")->required();
    c_pns->add_option("--mu", pns.mu, "Mean photon number")->required();
    c_pns->add_option("--eta-a", pns.eta_accessible, "Accessible transmission")->required();
    c_pns->add_option("--eta-i", pns.eta_inaccessible, "Inaccessible transmission")->required();
    c_pns->add_option("--fraction", pns.key_fraction, "Fraction of clicks entering the raw key")->required();
    c_pns->add_option("--rawbits", pns.raw_key_bits, "Raw key bits per second")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*c_sim) cmd_simulate(sim);
        if (*c_an) cmd_analyze(an);
        if (*c_sw) cmd_sweep(sw);
        if (*c_pns) cmd_pns(pns);
    } catch (const IoError& e) {
        std::cerr << "rfiqkd: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "rfiqkd: " << e.what() << "\n";
        return kExitUsage;
    }
    return 0;
}
