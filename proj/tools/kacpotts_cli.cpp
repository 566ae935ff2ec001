#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kacpotts/config.hpp"
#include "kacpotts/experiments.hpp"
#include "kacpotts/output.hpp"

namespace {

using kacpotts::json;

enum ExitCode { ok = 0, io_failure = 1, schema = 2, infeasible = 3, internal = 4 };

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 1;
    bool exact = false;
    bool mcmc = false;
    std::vector<std::string> sets;
    bool quiet = false;
};

/// "model.kernel.type=cosine" -> nested override; the value is parsed as JSON,
/// falling back to a plain string.
json parse_set(const std::string& s) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw kacpotts::SchemaError("--set expects key.path=value, got '" + s + "'");
    }
    std::string path = s.substr(0, eq);
    std::string text = s.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    std::vector<std::string> keys;
    std::stringstream ss(path);
    for (std::string k; std::getline(ss, k, '.');) {
        keys.push_back(k);
    }
    json out = value;
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
        out = json{{*it, out}};
    }
    return out;
}

void write_diagnostic(const std::string& dir, const std::string& kind, const json& user, const std::string& what) {
    try {
        std::filesystem::create_directories(dir);
        std::ofstream os(std::filesystem::path(dir) / "diagnostic.json");
        os << json{{"experiment", kind}, {"config", user}, {"error", what}, {"version", kacpotts::software_version}}.dump(2)
           << "\n";
    } catch (...) {
    }
}

int run(const std::string& kind, const Options& opt) {
    json user = json::object();
    std::vector<std::pair<std::string, std::string>> inputs;
    std::string out_dir = opt.out;
    try {
        if (!opt.config_path.empty()) {
            user = kacpotts::load_config_file(opt.config_path);
            std::ifstream in(opt.config_path, std::ios::binary);
            inputs.emplace_back(opt.config_path, std::string(std::istreambuf_iterator<char>(in), {}));
        }
        if (!user.is_object()) {
            throw kacpotts::SchemaError("config root: must be an object");
        }
        for (const auto& s : opt.sets) {
            kacpotts::detail::merge_into(user, parse_set(s));
        }
        if (opt.seed) {
            user["sampler"]["seed"] = *opt.seed;
        }
        if (!opt.out.empty()) {
            user["output"]["directory"] = opt.out;
        }
        if (opt.exact) {
            user["mode"] = "exact";
        }
        if (opt.mcmc) {
            user["mode"] = "mcmc";
        }
        auto cfg = kacpotts::parse_config(user, kind);
        out_dir = cfg.out_dir;
        kacpotts::StageTimer timer;
        timer.start("run");
        auto result = kacpotts::run_experiment(cfg, opt.threads);
        timer.start("emit");
        timer.stop();
        auto files = kacpotts::emit_results(result, cfg.out_dir, cfg.formats, cfg.resolved, cfg.seed, timer, inputs);
        if (!opt.quiet) {
            std::cout << kind << ": wrote " << files.size() + 1 << " files to " << cfg.out_dir << "\n";
            std::cout << result.report.dump(2) << "\n";
        }
        return ok;
    } catch (const kacpotts::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return schema;
    } catch (const kacpotts::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return schema;
    } catch (const kacpotts::Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return infeasible;
    } catch (const kacpotts::CapExceeded& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return infeasible;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return io_failure;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        if (out_dir.empty()) {
            out_dir = "kacpotts-out/" + kind;
        }
        write_diagnostic(out_dir, kind, user, e.what());
        std::cerr << "diagnostic written to " << out_dir << "/diagnostic.json\n";
        return internal;
    }
}

}

int main(int argc, char** argv) {
    CLI::App app{"Kac-Potts fuzzy kernel experiments"};
    app.require_subcommand(1);
    Options opt;
    std::string chosen;
    for (const auto& kind : kacpotts::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed (overrides sampler.seed)");
        sub->add_option("--out", opt.out, "output directory (overrides output.directory)");
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1u, 1024u));
        auto* ex = sub->add_flag("--exact", opt.exact, "exact enumeration mode");
        auto* mc = sub->add_flag("--mcmc", opt.mcmc, "Monte Carlo mode");
        ex->excludes(mc);
        sub->add_option("--set", opt.sets, "override a config key, e.g. model.q=4 (repeatable)");
        sub->add_flag("--quiet", opt.quiet, "do not print the report");
        sub->callback([&chosen, kind] { chosen = kind; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return schema;
    }
    return run(chosen, opt);
}
