#ifndef KACPOTTS_CONFIG_HPP
#define KACPOTTS_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "kernel.hpp"
#include "meanfield.hpp"
#include "sampler.hpp"

namespace kacpotts {

using json = nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"prop23-identity", "threshold-scan",     "badpoint-demo",
                                                "minimize-rate",   "sampler-diagnostics", "convention-probe",
                                                "ising-explore"};
    return kinds;
}

struct KernelSpec {
    std::string type = "uniform";
    double bandwidth = 0.1;
    double radius = 0.25;

    KacKernel build() const {
        switch (kernel_kind_from_string(type)) {
        case KernelKind::uniform:
            return KacKernel::uniform();
        case KernelKind::cosine:
            return KacKernel::cosine();
        case KernelKind::wrapped_gaussian:
            return KacKernel::wrapped_gaussian(bandwidth);
        case KernelKind::box:
            return KacKernel::box(radius);
        }
        return KacKernel::uniform();
    }
};

struct DilutionSpec {
    /// constant: rho = level; half: level on [0,1/2) and low elsewhere.
    std::string type = "constant";
    double level = 1.0;
    double low = 0.0;
};

/// Fully resolved experiment parameters; see README for the JSON schema.
struct ExperimentConfig {
    std::string experiment;
    int d = 1;
    std::vector<int> n_ladder;
    int q = 3;
    std::vector<double> beta_grid;
    std::string beta_units = "kac";
    KernelSpec kernel;
    std::vector<int> partition;
    std::size_t sweeps = 4000;
    std::size_t burn_in = 500;
    std::size_t chains = 8;
    std::uint64_t seed = 1;
    std::string sampler = "heat-bath";
    std::string mode = "exact";
    std::vector<int> m_values{8};
    std::size_t starts = 16;
    std::size_t site = 0;
    std::size_t max_iterations = 20000;
    double tolerance = 1e-9;
    DilutionSpec dilution;
    std::string out_dir;
    std::vector<std::string> formats{"csv", "json"};
    json resolved;

    SamplerKind sampler_kind() const { return sampler == "cluster" ? SamplerKind::cluster : SamplerKind::heat_bath; }

    /// Grid point converted to the Kac beta.
    double kac_beta(double b) const { return beta_units == "kac" ? b : to_kac_beta(MeanFieldBeta(b)); }
    MeanFieldBeta mf_beta(double b) const { return beta_units == "kac" ? from_kac_beta(b) : MeanFieldBeta(b); }
};

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& where, const std::string& what) {
    throw SchemaError("config " + where + ": " + what);
}

inline void allow_keys(const json& obj, const std::string& where, const std::set<std::string>& keys) {
    if (!obj.is_object()) {
        schema_fail(where, "must be an object");
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!keys.count(it.key())) {
            schema_fail(where, "unknown key '" + it.key() + "'");
        }
    }
}

inline int get_int(const json& v, const std::string& where, int lo, int hi) {
    if (!v.is_number_integer()) {
        schema_fail(where, "must be an integer");
    }
    auto x = v.get<long long>();
    if (x < lo || x > hi) {
        schema_fail(where, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(x);
}

inline std::size_t get_count(const json& v, const std::string& where, std::size_t lo) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        schema_fail(where, "must be a nonnegative integer");
    }
    auto x = v.get<std::uint64_t>();
    if (x < lo) {
        schema_fail(where, "must be at least " + std::to_string(lo));
    }
    return static_cast<std::size_t>(x);
}

inline double get_real(const json& v, const std::string& where) {
    if (!v.is_number()) {
        schema_fail(where, "must be a number");
    }
    return v.get<double>();
}

inline std::string get_enum(const json& v, const std::string& where, const std::vector<std::string>& allowed) {
    if (!v.is_string()) {
        schema_fail(where, "must be a string");
    }
    auto s = v.get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) {
            list += (list.empty() ? "" : ", ") + a;
        }
        schema_fail(where, "must be one of {" + list + "}");
    }
    return s;
}

template <typename F>
void for_array(const json& v, const std::string& where, F&& f) {
    if (!v.is_array() || v.empty()) {
        schema_fail(where, "must be a nonempty array");
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        f(v[i], where + "[" + std::to_string(i) + "]");
    }
}

inline void merge_into(json& base, const json& over) {
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_into(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

inline json beta_range(double lo, double hi, double step) {
    json a = json::array();
    int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    for (int i = 0; i <= count; ++i) {
        a.push_back(std::round((lo + i * step) * 1e10) / 1e10);
    }
    return a;
}

}

/// Defaults for each experiment kind, before user keys are merged in.
inline json experiment_defaults(const std::string& kind) {
    json base = {
        {"experiment", kind},
        {"model", {{"d", 1}, {"q", 3}, {"n_ladder", {16}}, {"beta_grid", {1.0}}, {"beta_units", "kac"},
                   {"kernel", {{"type", "uniform"}}}}},
        {"sampler", {{"sweeps", 4000}, {"burn_in", 500}, {"chains", 8}, {"seed", 1}, {"kind", "heat-bath"}}},
        {"mode", "exact"},
        {"options", json::object()},
        {"output", {{"directory", "kacpotts-out/" + kind}, {"formats", {"csv", "json"}}}},
    };
    json o;
    if (kind == "prop23-identity") {
        o = {{"model", {{"q", 3}, {"n_ladder", {3}}, {"beta_grid", {0.5, 1.0, 2.0}}}}, {"fuzzy", {{"partition", {2, 1}}}}};
    } else if (kind == "threshold-scan") {
        json grid = detail::beta_range(0.5, 8.0, 0.25);
        grid.push_back(2.0 * beta_critical(3));
        o = {{"model", {{"q", 4}, {"n_ladder", json::array()}, {"beta_grid", grid}, {"beta_units", "mean-field"}}},
             {"fuzzy", {{"partition", {3, 1}}}},
             {"options", {{"m", {8}}}}};
    } else if (kind == "badpoint-demo") {
        o = {{"model", {{"q", 4}, {"n_ladder", {16, 32, 64}}, {"beta_grid", {2.0 * beta_critical(3)}},
                        {"beta_units", "mean-field"}}},
             {"fuzzy", {{"partition", {3, 1}}}},
             {"options", {{"m", {4, 8}}}}};
    } else if (kind == "minimize-rate") {
        o = {{"model", {{"q", 3}, {"n_ladder", {32}}, {"beta_grid", {1.0}}, {"kernel", {{"type", "cosine"}}}}},
             {"options", {{"starts", 16}}}};
    } else if (kind == "sampler-diagnostics") {
        o = {{"model", {{"q", 3}, {"n_ladder", {64}}, {"beta_grid", {1.2}}}}, {"mode", "mcmc"}};
    } else if (kind == "convention-probe") {
        json grid = json::array({0.0, 0.5, 0.8});
        for (auto v : detail::beta_range(1.0, 1.8, 0.02)) {
            grid.push_back(v);
        }
        for (double v : {2.2, 2.8, 3.2}) {
            grid.push_back(v);
        }
        o = {{"model", {{"q", 3}, {"n_ladder", {256}}, {"beta_grid", grid}}}, {"mode", "mcmc"}};
    } else if (kind == "ising-explore") {
        o = {{"model", {{"q", 2}, {"n_ladder", {32}}, {"beta_grid", {1.2}}, {"kernel", {{"type", "cosine"}}}}},
             {"options", {{"starts", 16}, {"dilution", {{"type", "half"}, {"level", 1.0}, {"low", 0.4}}}}}};
    }
    detail::merge_into(base, o);
    return base;
}

/// Validates a JSON document against the schema and resolves it into a config.
/// `kind` (from the CLI subcommand) must agree with an "experiment" key if present.
inline ExperimentConfig parse_config(const json& user, const std::string& kind) {
    using namespace detail;
    allow_keys(user, "root", {"experiment", "model", "fuzzy", "sampler", "mode", "options", "output"});
    std::string k = kind;
    if (user.contains("experiment")) {
        auto e = get_enum(user["experiment"], "experiment", experiment_kinds());
        if (!k.empty() && e != k) {
            schema_fail("experiment", "'" + e + "' does not match subcommand '" + k + "'");
        }
        k = e;
    }
    if (k.empty()) {
        schema_fail("experiment", "missing");
    }
    get_enum(json(k), "experiment", experiment_kinds());
    json doc = experiment_defaults(k);
    merge_into(doc, user);

    ExperimentConfig c;
    c.experiment = k;
    const json& model = doc["model"];
    allow_keys(model, "model", {"d", "n", "n_ladder", "q", "beta", "beta_grid", "beta_units", "kernel"});
    c.d = get_int(model["d"], "model.d", 1, 3);
    c.q = get_int(model["q"], "model.q", 2, 64);
    if (model.contains("n")) {
        c.n_ladder = {get_int(model["n"], "model.n", 1, 1 << 20)};
    } else if (model["n_ladder"].is_array() && model["n_ladder"].empty()) {
        c.n_ladder.clear();
    } else {
        for_array(model["n_ladder"], "model.n_ladder",
                  [&](const json& v, const std::string& w) { c.n_ladder.push_back(get_int(v, w, 1, 1 << 20)); });
    }
    if (c.n_ladder.empty() && k != "threshold-scan") {
        schema_fail("model.n_ladder", "must be nonempty for " + k);
    }
    if (model.contains("beta")) {
        c.beta_grid = {get_real(model["beta"], "model.beta")};
    } else {
        for_array(model["beta_grid"], "model.beta_grid",
                  [&](const json& v, const std::string& w) { c.beta_grid.push_back(get_real(v, w)); });
    }
    for (double b : c.beta_grid) {
        if (!(b >= 0.0) || !std::isfinite(b)) {
            schema_fail("model.beta_grid", "entries must be finite and nonnegative");
        }
    }
    c.beta_units = get_enum(model["beta_units"], "model.beta_units", {"kac", "mean-field"});
    const json& kern = model["kernel"];
    allow_keys(kern, "model.kernel", {"type", "bandwidth", "radius"});
    c.kernel.type = get_enum(kern["type"], "model.kernel.type", {"uniform", "cosine", "gaussian", "wrapped-gaussian", "box"});
    if (kern.contains("bandwidth")) {
        c.kernel.bandwidth = get_real(kern["bandwidth"], "model.kernel.bandwidth");
    }
    if (kern.contains("radius")) {
        c.kernel.radius = get_real(kern["radius"], "model.kernel.radius");
    }
    try {
        (void)c.kernel.build();
    } catch (const InvalidArgument& e) {
        schema_fail("model.kernel", e.what());
    }

    if (doc.contains("fuzzy")) {
        allow_keys(doc["fuzzy"], "fuzzy", {"partition"});
        for_array(doc["fuzzy"]["partition"], "fuzzy.partition",
                  [&](const json& v, const std::string& w) { c.partition.push_back(get_int(v, w, 1, 64)); });
        int sum = 0;
        for (int r : c.partition) {
            sum += r;
        }
        if (sum != c.q) {
            schema_fail("fuzzy.partition", "class sizes must add up to model.q");
        }
        if (c.partition.size() < 2 || static_cast<int>(c.partition.size()) >= c.q) {
            schema_fail("fuzzy.partition", "need 1 < s < q classes");
        }
    }

    const json& s = doc["sampler"];
    allow_keys(s, "sampler", {"sweeps", "burn_in", "chains", "seed", "kind"});
    c.sweeps = get_count(s["sweeps"], "sampler.sweeps", 1);
    c.burn_in = get_count(s["burn_in"], "sampler.burn_in", 0);
    c.chains = get_count(s["chains"], "sampler.chains", 2);
    c.seed = static_cast<std::uint64_t>(get_count(s["seed"], "sampler.seed", 0));
    c.sampler = get_enum(s["kind"], "sampler.kind", {"heat-bath", "cluster"});
    c.mode = get_enum(doc["mode"], "mode", {"exact", "mcmc"});

    const json& o = doc["options"];
    allow_keys(o, "options", {"m", "starts", "site", "max_iterations", "tolerance", "dilution"});
    if (o.contains("m")) {
        c.m_values.clear();
        for_array(o["m"], "options.m", [&](const json& v, const std::string& w) { c.m_values.push_back(get_int(v, w, 1, 1 << 20)); });
    }
    if (o.contains("starts")) {
        c.starts = get_count(o["starts"], "options.starts", 1);
    }
    if (o.contains("site")) {
        c.site = get_count(o["site"], "options.site", 0);
    }
    if (o.contains("max_iterations")) {
        c.max_iterations = get_count(o["max_iterations"], "options.max_iterations", 1);
    }
    if (o.contains("tolerance")) {
        c.tolerance = get_real(o["tolerance"], "options.tolerance");
    }
    if (o.contains("dilution")) {
        const json& dl = o["dilution"];
        allow_keys(dl, "options.dilution", {"type", "level", "low"});
        if (dl.contains("type")) {
            c.dilution.type = get_enum(dl["type"], "options.dilution.type", {"constant", "half"});
        }
        if (dl.contains("level")) {
            c.dilution.level = get_real(dl["level"], "options.dilution.level");
        }
        if (dl.contains("low")) {
            c.dilution.low = get_real(dl["low"], "options.dilution.low");
        }
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(c.dilution.level) || !in01(c.dilution.low)) {
            schema_fail("options.dilution", "levels must lie in [0,1]");
        }
    }

    const json& out = doc["output"];
    allow_keys(out, "output", {"directory", "formats"});
    if (!out["directory"].is_string()) {
        schema_fail("output.directory", "must be a string");
    }
    c.out_dir = out["directory"].get<std::string>();
    c.formats.clear();
    for_array(out["formats"], "output.formats",
              [&](const json& v, const std::string& w) { c.formats.push_back(get_enum(v, w, {"csv", "json"})); });
    c.resolved = doc;
    return c;
}

inline json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError("config: cannot open '" + path + "'");
    }
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
}

}

#endif
