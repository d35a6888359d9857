#include "nmqsd/config.hpp"

#include "nmqsd/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace nmqsd {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys{"mode",    "gamma",   "omega",   "dt",
                                       "t_max",   "output_stride", "n_traj", "master_seed",
                                       "psi0",    "kernel",  "workers", "output",
                                       "trace_normalize", "pseudomode_levels"};

template <typename T>
T field(const json& doc, const std::string& key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + key + "': " + e.what());
    }
}

} // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::Linear: return "linear";
    case Mode::Nonlinear: return "nonlinear";
    case Mode::MarkovWhite: return "markov_white";
    case Mode::Lindblad: return "lindblad";
    case Mode::Pseudomode: return "pseudomode";
    }
    return "unknown";
}

Mode parse_mode(std::string_view name) {
    for (Mode m : {Mode::Linear, Mode::Nonlinear, Mode::MarkovWhite, Mode::Lindblad, Mode::Pseudomode}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("config field 'mode': unknown mode '" + std::string(name) + "'");
}

bool is_stochastic(Mode mode) {
    return mode == Mode::Linear || mode == Mode::Nonlinear || mode == Mode::MarkovWhite;
}

StateVector ExperimentConfig::initial_state() const {
    return normalize(StateVector(psi0[0], psi0[1], psi0[2])).first;
}

void validate(const ExperimentConfig& c) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("config field '") + name + "': must be positive and finite");
        }
    };
    positive(c.dt, "dt");
    positive(c.t_max, "t_max");
    if (!std::isfinite(c.omega)) throw ConfigError("config field 'omega': must be finite");
    if (c.mode == Mode::Linear || c.mode == Mode::Nonlinear || c.mode == Mode::Pseudomode) {
        if (!c.tabulated_kernel() || c.mode == Mode::Pseudomode) positive(c.gamma, "gamma");
    }
    if (c.output_stride < 1) throw ConfigError("config field 'output_stride': must be >= 1");
    if (is_stochastic(c.mode) && c.n_traj < 1) throw ConfigError("config field 'n_traj': must be >= 1");
    if (c.workers < 0) throw ConfigError("config field 'workers': must be >= 0");
    if (c.pseudomode_levels < 2) throw ConfigError("config field 'pseudomode_levels': must be >= 2");
    double norm2 = 0.0;
    for (const auto& a : c.psi0) {
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
            throw ConfigError("config field 'psi0': amplitudes must be finite");
        }
        norm2 += std::norm(a);
    }
    if (!(norm2 > 0.0)) throw ConfigError("config field 'psi0': state has zero norm");
    const double steps = c.t_max / c.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
        throw ConfigError("config field 't_max': must be a whole number of dt steps");
    }
    if (c.tabulated_kernel() && c.mode != Mode::Linear && c.mode != Mode::Nonlinear) {
        throw ConfigError("config field 'kernel': tabulated kernels are only supported in linear/nonlinear modes");
    }
}

ExperimentConfig parse_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (!kKnownKeys.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
    }

    ExperimentConfig c;
    c.mode = parse_mode(field<std::string>(doc, "mode", std::string(to_string(c.mode))));
    c.gamma = field(doc, "gamma", c.gamma);
    c.omega = field(doc, "omega", c.omega);
    c.dt = field(doc, "dt", c.dt);
    c.t_max = field(doc, "t_max", c.t_max);
    c.output_stride = field(doc, "output_stride", c.output_stride);
    c.n_traj = field(doc, "n_traj", c.n_traj);
    c.master_seed = field(doc, "master_seed", c.master_seed);
    c.kernel = field(doc, "kernel", c.kernel);
    c.workers = field(doc, "workers", c.workers);
    c.output = field(doc, "output", c.output);
    c.trace_normalize = field(doc, "trace_normalize", c.trace_normalize);
    c.pseudomode_levels = field(doc, "pseudomode_levels", c.pseudomode_levels);
    if (doc.contains("psi0")) {
        const auto& p = doc["psi0"];
        if (!p.is_array() || p.size() != 3) {
            throw ConfigError("config field 'psi0': expected three [re, im] pairs");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            if (!p[i].is_array() || p[i].size() != 2 || !p[i][0].is_number() || !p[i][1].is_number()) {
                throw ConfigError("config field 'psi0': entry " + std::to_string(i) + " must be [re, im]");
            }
            c.psi0[i] = Complex(p[i][0].get<double>(), p[i][1].get<double>());
        }
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json doc;
    doc["mode"] = std::string(to_string(c.mode));
    doc["gamma"] = c.gamma;
    doc["omega"] = c.omega;
    doc["dt"] = c.dt;
    doc["t_max"] = c.t_max;
    doc["output_stride"] = c.output_stride;
    doc["n_traj"] = c.n_traj;
    doc["master_seed"] = c.master_seed;
    doc["psi0"] = json::array();
    for (const auto& a : c.psi0) doc["psi0"].push_back({a.real(), a.imag()});
    doc["kernel"] = c.kernel;
    doc["workers"] = c.workers;
    doc["output"] = c.output;
    doc["trace_normalize"] = c.trace_normalize;
    doc["pseudomode_levels"] = c.pseudomode_levels;
    return doc.dump(2) + "\n";
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("NMQSD_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
        throw ConfigError("NMQSD_WORKERS must be a positive integer");
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace nmqsd
