#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "collision.hpp"
#include "data_factory.hpp"
#include "error.hpp"
#include "evolution.hpp"
#include "grid.hpp"
#include "transport.hpp"

namespace kolmo::lab {

using json = nlohmann::ordered_json;

inline constexpr const char* tool_version = "0.1.0";
inline constexpr int schema_version = 1;

struct experiment_info {
    const char* name;
    const char* summary;
};

inline const std::vector<experiment_info>& experiments() {
    static const std::vector<experiment_info> list{
        {"partition-audit", "dyadic partition residuals and support disjointness"},
        {"norm-equivalence", "dyadic vs direct weighted Sobolev norms, Bernstein ratios, commutator sweep"},
        {"rough-data-scan", "rough data: weighted norm increments, divergence functional, energy functional"},
        {"toy-dichotomy", "smoothing/divergence crossover n* of the toy model"},
        {"growth-law", "pointwise growth exponents after toy evolution, solver cross-validation"},
        {"transport-gain", "x-regularity gain of the kinetic transport probe"},
        {"collision-identities", "Bobylev vs direct collision operator, equilibrium, cancellation, angular blow-up"},
        {"coercivity", "Fourier lower bound and the coercivity ratio"},
    };
    return list;
}

inline bool is_experiment(const std::string& name) {
    for (const auto& e : experiments())
        if (name == e.name) return true;
    return false;
}

inline std::string experiment_names() {
    std::string s;
    for (const auto& e : experiments()) s += (s.empty() ? "" : ", ") + std::string(e.name);
    return s;
}

// carries every violation found in one pass
struct config_errors : config_error {
    std::vector<std::string> errors;
    explicit config_errors(std::vector<std::string> e) : config_error(join(e)), errors(std::move(e)) {}

    static std::string join(const std::vector<std::string>& e) {
        std::string s = "invalid configuration:";
        for (const auto& x : e) s += "\n  " + x;
        return s;
    }
};

struct GridSettings {
    int dim = 1;
    double half_length = 64.0;
    std::size_t points = 1024;

    BoxGrid make() const { return BoxGrid(dim, half_length, points); }
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    std::string output_dir;
    GridSettings grid;
    ToyModelParams toy;
    RoughDataSpec rough;
    CollisionParams collision;
    TransportProbeParams transport;
    json options = json::object();
    json effective = json::object(); // defaults merged with the file, echoed into reports

    const json& option(const char* key) const { return options.at(key); }
    double number(const char* key) const { return options.at(key).get<double>(); }
    long integer(const char* key) const { return options.at(key).get<long>(); }
    bool flag(const char* key) const { return options.at(key).get<bool>(); }
};

namespace detail {

inline json grid_json(int d, double L, std::size_t n) { return json{{"dim", d}, {"half_length", L}, {"points", n}}; }

inline json toy_json(const ToyModelParams& p) {
    return json{{"gamma", p.gamma}, {"s", p.s}, {"mode", to_string(p.mode)}, {"dt", p.dt}, {"horizon", p.horizon}};
}

inline json rough_json(const RoughDataSpec& r) {
    return json{{"ell", r.ell},
                {"eps", r.eps},
                {"a", r.a},
                {"J", r.J},
                {"amplitude", r.amplitude},
                {"width", r.width},
                {"law", r.law == amplitude_law::harmonic ? "harmonic" : "geometric"},
                {"normalization", r.normalization == packet_normalization::l2 ? "l2" : "peak"},
                {"nonneg", r.nonneg},
                {"background_eps", r.background_eps}};
}

inline json collision_json(const CollisionParams& p) {
    return json{{"gamma", p.gamma},
                {"s", p.s},
                {"eps_theta", p.eps_theta},
                {"c", p.c},
                {"K", p.K},
                {"dim", p.dim},
                {"radial_nodes", p.radial_nodes},
                {"angular_nodes", p.angular_nodes},
                {"azimuth_nodes", p.azimuth_nodes},
                {"direction_nodes", p.direction_nodes},
                {"table_step", p.table_step},
                {"cost_cap", p.cost_cap}};
}

inline json transport_json(const TransportProbeParams& p) {
    return json{{"s", p.s},
                {"beta", p.beta},
                {"p", p.p},
                {"horizon", p.horizon},
                {"t_lo", p.t_lo},
                {"t_hi", p.t_hi},
                {"t_nodes", p.t_nodes},
                {"v_half", p.v_half},
                {"v_points", p.v_points},
                {"x_points", p.x_points},
                {"alpha_max", p.alpha_max},
                {"alpha_step", p.alpha_step},
                {"growth_threshold", p.growth_threshold},
                {"cost_cap", p.cost_cap}};
}

// a null default means "integer or null", null selecting the computed default
inline bool same_kind(const json& def, const json& v) {
    if (def.is_null()) return v.is_null() || v.is_number_integer();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_number_integer()) return v.is_number_integer();
    if (def.is_number()) return v.is_number();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) {
        if (!v.is_array()) return false;
        if (def.empty()) return true;
        for (const auto& e : v)
            if (!same_kind(def.front(), e)) return false;
        return true;
    }
    return false;
}

inline std::string plain_kind(const json& def) {
    if (def.is_null()) return "integer or null";
    if (def.is_boolean()) return "boolean";
    if (def.is_number_integer()) return "integer";
    if (def.is_number()) return "number";
    if (def.is_string()) return "string";
    if (def.is_array()) {
        if (def.empty()) return "array";
        auto e = plain_kind(def.front());
        return "array of " + (e.rfind("array", 0) == 0 ? "arrays" + e.substr(5) : e + "s");
    }
    return "object";
}

inline std::string kind_name(const json& def) {
    auto p = plain_kind(def);
    return (std::string("aeio").find(p[0]) != std::string::npos ? "an " : "a ") + p;
}

} // namespace detail

// every section a given experiment reads, filled with its defaults
inline json experiment_defaults(const std::string& name) {
    using detail::grid_json;
    json d = json::object();
    if (name == "partition-audit") {
        d["grid"] = grid_json(1, 64.0, 1024);
        d["options"] = {{"radial_samples", 100000}, {"fields", 5}, {"smoothing", 0.1}};
    } else if (name == "norm-equivalence") {
        d["grid"] = grid_json(1, 64.0, 1024);
        d["options"] = {{"fields", 50},          {"smoothing", 0.1}, {"bernstein", true},
                        {"bernstein_fields", 5}, {"commutator", true}, {"commutator_draws", 4}};
    } else if (name == "rough-data-scan") {
        d["grid"] = grid_json(1, 512.0, 65536);
        d["rough_data"] = detail::rough_json(RoughDataSpec{});
        d["options"] = {{"K", nullptr}, {"M2", nullptr}, {"x_points", 256}, {"energy_scan", true}};
    } else if (name == "toy-dichotomy") {
        d["grid"] = grid_json(1, 2048.0, std::size_t(1) << 20);
        d["toy"] = detail::toy_json(ToyModelParams{});
        d["options"] = {{"triples", json::array({json::array({-1.0, 0.5, 2.0}), json::array({-0.8, 0.4, 2.5})})},
                        {"J", 8},
                        {"J_lo", 5},
                        {"delta", 0.2},
                        {"n_min", 0.5},
                        {"n_max", 4.0},
                        {"n_step", 0.25}};
    } else if (name == "growth-law") {
        d["grid"] = grid_json(1, 256.0, 16384);
        d["toy"] = detail::toy_json(ToyModelParams{});
        RoughDataSpec r;
        r.J = 5;
        r.law = amplitude_law::geometric;
        r.normalization = packet_normalization::peak;
        d["rough_data"] = detail::rough_json(r);
        d["options"] = {{"orders", {0, 1, 2, 3}},
                        {"shell_lo", 3},
                        {"shell_hi", 6},
                        {"time_samples", 5},
                        {"cross_validation", true}};
    } else if (name == "transport-gain") {
        d["transport"] = detail::transport_json(TransportProbeParams{});
        d["options"] = {{"kappa", 0.02}};
    } else if (name == "collision-identities") {
        d["collision"] = detail::collision_json(CollisionParams{});
        d["options"] = {{"eps_list", {0.4, 0.2, 0.1, 0.05}}, {"oracle_points", 16}, {"oracle_half_length", 4.0}};
    } else if (name == "coercivity") {
        d["collision"] = detail::collision_json(CollisionParams{});
        RoughDataSpec r;
        r.J = 5;
        r.nonneg = true;
        d["rough_data"] = detail::rough_json(r);
        d["options"] = {{"fit_radius", 0.1}, {"rough_fit_radius", 0.05}, {"mc_samples", 200000}};
    }
    return d;
}

namespace detail {

struct typed_reader {
    const json& obj;
    std::string where;
    std::vector<std::string>& errs;

    double num(const char* k) const { return obj.at(k).get<double>(); }
    int integer(const char* k) const {
        const auto v = obj.at(k).get<std::int64_t>();
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
            errs.push_back(where + "." + k + " is out of range");
            return 0;
        }
        return static_cast<int>(v);
    }
    std::size_t count(const char* k) const {
        const auto v = obj.at(k).get<std::int64_t>();
        if (v < 0) {
            errs.push_back(where + "." + k + " must be non-negative");
            return 0;
        }
        return static_cast<std::size_t>(v);
    }
    bool flag(const char* k) const { return obj.at(k).get<bool>(); }
    std::string choice(const char* k, std::initializer_list<const char*> allowed) const {
        const auto v = obj.at(k).get<std::string>();
        std::string list;
        for (const char* a : allowed) {
            if (v == a) return v;
            list += (list.empty() ? "" : ", ") + std::string(a);
        }
        errs.push_back(where + "." + k + " must be one of " + list + "; got '" + v + "'");
        return *allowed.begin();
    }
    void add(const std::vector<std::string>& v) const {
        for (const auto& e : v) errs.push_back(where + ": " + e);
    }
};

inline void read_toy(const json& j, ToyModelParams& p, std::vector<std::string>& errs) {
    typed_reader r{j, "toy", errs};
    p.gamma = r.num("gamma");
    p.s = r.num("s");
    p.mode = r.choice("mode", {"surrogate", "full"}) == "full" ? solver_mode::full : solver_mode::surrogate;
    p.dt = r.num("dt");
    p.horizon = r.num("horizon");
    r.add(p.violations());
}

inline void read_rough(const json& j, RoughDataSpec& s, std::vector<std::string>& errs) {
    typed_reader r{j, "rough_data", errs};
    s.ell = r.num("ell");
    s.eps = r.num("eps");
    s.a = r.num("a");
    s.J = r.integer("J");
    s.amplitude = r.num("amplitude");
    s.width = r.num("width");
    s.law = r.choice("law", {"harmonic", "geometric"}) == "geometric" ? amplitude_law::geometric
                                                                        : amplitude_law::harmonic;
    s.normalization =
        r.choice("normalization", {"l2", "peak"}) == "peak" ? packet_normalization::peak : packet_normalization::l2;
    s.nonneg = r.flag("nonneg");
    s.background_eps = r.num("background_eps");
    r.add(s.violations());
}

inline void read_collision(const json& j, CollisionParams& p, std::vector<std::string>& errs) {
    typed_reader r{j, "collision", errs};
    p.gamma = r.num("gamma");
    p.s = r.num("s");
    p.eps_theta = r.num("eps_theta");
    p.c = r.num("c");
    p.K = r.integer("K");
    p.dim = r.integer("dim");
    p.radial_nodes = r.count("radial_nodes");
    p.angular_nodes = r.count("angular_nodes");
    p.azimuth_nodes = r.count("azimuth_nodes");
    p.direction_nodes = r.count("direction_nodes");
    p.table_step = r.num("table_step");
    p.cost_cap = r.num("cost_cap");
    r.add(p.violations());
}

inline void read_transport(const json& j, TransportProbeParams& p, std::vector<std::string>& errs) {
    typed_reader r{j, "transport", errs};
    p.s = r.num("s");
    p.beta = r.num("beta");
    p.p = r.num("p");
    p.horizon = r.num("horizon");
    p.t_lo = r.num("t_lo");
    p.t_hi = r.num("t_hi");
    p.t_nodes = r.count("t_nodes");
    p.v_half = r.num("v_half");
    p.v_points = r.count("v_points");
    p.x_points.clear();
    for (const auto& v : j.at("x_points")) {
        const auto n = v.get<std::int64_t>();
        if (n < 0) errs.push_back("transport.x_points entries must be non-negative");
        p.x_points.push_back(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    }
    p.alpha_max = r.num("alpha_max");
    p.alpha_step = r.num("alpha_step");
    p.growth_threshold = r.num("growth_threshold");
    p.cost_cap = r.num("cost_cap");
    r.add(p.violations());
}

inline void read_grid(const json& j, GridSettings& g, std::vector<std::string>& errs) {
    typed_reader r{j, "grid", errs};
    g.dim = r.integer("dim");
    g.half_length = r.num("half_length");
    g.points = r.count("points");
    try {
        g.make();
    } catch (const config_error& e) {
        errs.push_back(std::string("grid: ") + e.what());
    }
}

inline void check_options(const std::string& exp, const json& o, std::vector<std::string>& errs) {
    auto positive = [&](const char* k) {
        if (!(o.at(k).get<double>() > 0.0)) errs.push_back(std::string("options.") + k + " must be positive");
    };
    if (exp == "partition-audit") {
        positive("radial_samples");
        positive("fields");
        const double d = o.at("smoothing").get<double>();
        if (!(d > 0.0 && d < 0.125)) errs.push_back("options.smoothing must lie in (0, 1/8)");
    } else if (exp == "norm-equivalence") {
        positive("fields");
        positive("bernstein_fields");
        positive("commutator_draws");
        const double d = o.at("smoothing").get<double>();
        if (!(d > 0.0 && d < 0.125)) errs.push_back("options.smoothing must lie in (0, 1/8)");
    } else if (exp == "rough-data-scan") {
        if (!o.at("K").is_null() && o.at("K").get<long>() < -1) errs.push_back("options.K must be >= -1 or null");
        if (!o.at("M2").is_null() && o.at("M2").get<long>() < 0) errs.push_back("options.M2 must be >= 0 or null");
        const auto n = o.at("x_points").get<long>();
        if (n < 8 || (n & (n - 1))) errs.push_back("options.x_points must be a power of two >= 8");
    } else if (exp == "toy-dichotomy") {
        if (o.at("triples").empty()) errs.push_back("options.triples must list at least one (gamma, s, ell) triple");
        for (const auto& t : o.at("triples")) {
            if (t.size() != 3) {
                errs.push_back("options.triples entries must be [gamma, s, ell]");
                continue;
            }
            DichotomyDataSpec ds;
            ds.gamma = t[0].get<double>();
            ds.s = t[1].get<double>();
            ds.ell = t[2].get<double>();
            try {
                ds.validate();
            } catch (const config_error& e) {
                errs.push_back(std::string("options.triples: ") + e.what());
            }
        }
        const long J = o.at("J").get<long>(), lo = o.at("J_lo").get<long>();
        if (J < 3) errs.push_back("options.J must be at least 3");
        if (lo < 2 || lo > J - 1) errs.push_back("options.J_lo must lie in [2, J-1]");
        positive("delta");
        positive("n_step");
        if (!(o.at("n_min").get<double>() < o.at("n_max").get<double>()))
            errs.push_back("options.n_min must be below options.n_max");
    } else if (exp == "growth-law") {
        if (o.at("orders").empty()) errs.push_back("options.orders must not be empty");
        for (const auto& a : o.at("orders"))
            if (a.get<long>() < 0 || a.get<long>() > 6) errs.push_back("options.orders entries must lie in [0, 6]");
        if (o.at("shell_lo").get<long>() < 0 || o.at("shell_hi").get<long>() < o.at("shell_lo").get<long>() + 2)
            errs.push_back("options.shell_lo/shell_hi must span at least three shells");
        if (o.at("time_samples").get<long>() < 2) errs.push_back("options.time_samples must be at least 2");
    } else if (exp == "transport-gain") {
        if (!(o.at("kappa").get<double>() >= 0.0)) errs.push_back("options.kappa must be non-negative");
    } else if (exp == "collision-identities") {
        if (o.at("eps_list").size() < 3) errs.push_back("options.eps_list needs at least three cutoffs");
        const auto n = o.at("oracle_points").get<long>();
        if (n < 8 || (n & (n - 1))) errs.push_back("options.oracle_points must be a power of two >= 8");
        positive("oracle_half_length");
    } else if (exp == "coercivity") {
        positive("fit_radius");
        positive("rough_fit_radius");
        positive("mc_samples");
    }
}

} // namespace detail

inline std::vector<std::string> config_violations(const json& in, ExperimentConfig* out = nullptr) {
    std::vector<std::string> errs;
    if (!in.is_object()) return {"configuration must be a JSON object"};
    static const std::vector<std::string> top{"experiment", "seed",      "output_dir", "grid",   "toy",
                                              "rough_data", "collision", "transport",  "options"};
    for (const auto& [k, v] : in.items())
        if (std::find(top.begin(), top.end(), k) == top.end()) errs.push_back("unknown key '" + k + "'");

    ExperimentConfig cfg;
    if (!in.contains("experiment")) {
        errs.push_back("missing 'experiment'; valid names: " + experiment_names());
    } else if (!in.at("experiment").is_string()) {
        errs.push_back("'experiment' must be a string; valid names: " + experiment_names());
    } else {
        cfg.experiment = in.at("experiment").get<std::string>();
        if (!is_experiment(cfg.experiment)) {
            errs.push_back("unknown experiment '" + cfg.experiment + "'; valid names: " + experiment_names());
            cfg.experiment.clear();
        }
    }
    if (in.contains("seed")) {
        const auto& sd = in.at("seed");
        if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0))
            errs.push_back("'seed' must be a non-negative integer");
        else cfg.seed = in.at("seed").get<std::uint64_t>();
    }
    if (in.contains("output_dir")) {
        if (!in.at("output_dir").is_string() || in.at("output_dir").get<std::string>().empty())
            errs.push_back("'output_dir' must be a non-empty string");
        else cfg.output_dir = in.at("output_dir").get<std::string>();
    }
    if (cfg.experiment.empty()) return errs;
    if (cfg.output_dir.empty()) cfg.output_dir = "kolmo-out/" + cfg.experiment;

    // a mistyped entry is reported and its default kept, so the semantic checks still run
    json eff = experiment_defaults(cfg.experiment);
    for (const char* sec : {"grid", "toy", "rough_data", "collision", "transport", "options"}) {
        if (!in.contains(sec)) continue;
        const auto& v = in.at(sec);
        if (!eff.contains(sec)) {
            errs.push_back("'" + std::string(sec) + "' is not used by " + cfg.experiment);
            continue;
        }
        if (!v.is_object()) {
            errs.push_back("'" + std::string(sec) + "' must be an object");
            continue;
        }
        for (const auto& [k, x] : v.items()) {
            if (!eff[sec].contains(k)) {
                errs.push_back("unknown key " + std::string(sec) + "." + k);
                continue;
            }
            if (!detail::same_kind(eff[sec][k], x)) {
                errs.push_back(std::string(sec) + "." + k + " must be " + detail::kind_name(eff[sec][k]));
                continue;
            }
            eff[sec][k] = x;
        }
    }
    if (cfg.experiment == "toy-dichotomy" && in.contains("toy") && in.at("toy").is_object())
        for (const char* k : {"gamma", "s"})
            if (in.at("toy").contains(k))
                errs.push_back(std::string("toy.") + k + " is set per triple in options.triples for toy-dichotomy");
    if (eff.contains("grid")) detail::read_grid(eff["grid"], cfg.grid, errs);
    if (eff.contains("toy")) detail::read_toy(eff["toy"], cfg.toy, errs);
    if (eff.contains("rough_data")) detail::read_rough(eff["rough_data"], cfg.rough, errs);
    if (eff.contains("collision")) detail::read_collision(eff["collision"], cfg.collision, errs);
    if (eff.contains("transport")) detail::read_transport(eff["transport"], cfg.transport, errs);
    detail::check_options(cfg.experiment, eff["options"], errs);
    cfg.options = eff["options"];

    json echo = json::object();
    echo["experiment"] = cfg.experiment;
    echo["seed"] = cfg.seed;
    echo["output_dir"] = cfg.output_dir;
    for (auto& [k, v] : eff.items()) echo[k] = v;
    cfg.effective = std::move(echo);
    if (out && errs.empty()) *out = std::move(cfg);
    return errs;
}

inline ExperimentConfig parse_config(const json& in) {
    ExperimentConfig cfg;
    auto errs = config_violations(in, &cfg);
    if (!errs.empty()) throw config_errors(std::move(errs));
    return cfg;
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_errors({"cannot open config file '" + path + "'"});
    try {
        return json::parse(is, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw config_errors({"'" + path + "' is not valid JSON: " + e.what()});
    }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

// ---- report ----

struct check_result {
    std::string name;
    std::string stage;
    double measured = std::numeric_limits<double>::quiet_NaN();
    std::string relation = "<="; // measured <relation> tolerance
    double tolerance = 0.0;
    bool pass = false;
    json values = json::object();
    std::string diagnostic;
};

inline bool compare(double measured, const std::string& rel, double tol) {
    if (!std::isfinite(measured)) return false;
    if (rel == "<=") return measured <= tol;
    if (rel == ">=") return measured >= tol;
    if (rel == "<") return measured < tol;
    if (rel == ">") return measured > tol;
    throw contract_violation("unknown relation " + rel);
}

struct artifact {
    std::string file; // relative to the output directory
    std::string kind;
    json meta = json::object();
};

struct RunReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string output_dir;
    json config = json::object();
    std::vector<check_result> checks;
    std::vector<std::pair<std::string, double>> stages; // stage name, seconds
    std::vector<artifact> artifacts;
    std::vector<std::string> plots;
    std::vector<std::string> notes;
    std::string error;
    double wall_clock = 0.0;

    bool passed() const {
        if (!error.empty() || checks.empty()) return false;
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    const check_result* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }

    double stage_seconds(const std::string& name) const {
        for (const auto& [n, s] : stages)
            if (n == name) return s;
        return 0.0;
    }

    json to_json() const {
        json j;
        j["schema_version"] = schema_version;
        j["tool_version"] = tool_version;
        j["experiment"] = experiment;
        j["seed"] = seed;
        j["config"] = config;
        j["passed"] = passed();
        j["error"] = error.empty() ? json(nullptr) : json(error);
        j["wall_clock_seconds"] = wall_clock;
        j["checks"] = json::array();
        for (const auto& c : checks) {
            json x;
            x["name"] = c.name;
            x["stage"] = c.stage;
            x["measured"] = c.measured;
            x["relation"] = c.relation;
            x["tolerance"] = c.tolerance;
            x["pass"] = c.pass;
            x["values"] = c.values;
            if (!c.diagnostic.empty()) x["diagnostic"] = c.diagnostic;
            j["checks"].push_back(std::move(x));
        }
        j["stages"] = json::array();
        for (const auto& [n, s] : stages) j["stages"].push_back({{"name", n}, {"seconds", s}});
        j["artifacts"] = json::array();
        for (const auto& a : artifacts) j["artifacts"].push_back({{"file", a.file}, {"kind", a.kind}, {"meta", a.meta}});
        j["plots"] = plots;
        j["notes"] = notes;
        return j;
    }
};

} // namespace kolmo::lab
