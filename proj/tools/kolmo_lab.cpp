#include <CLI11.hpp>

#include <kolmo/lab.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

using namespace kolmo::lab;

constexpr int exit_pass = 0;
constexpr int exit_fail = 1;
constexpr int exit_config = 2;

void print_errors(const config_errors& e) {
    std::cerr << "configuration error:\n";
    for (const auto& x : e.errors) std::cerr << "  " << x << "\n";
}

json load(const std::string& path, const std::string& out_dir, const std::string& seed) {
    auto j = read_json_file(path);
    if (!j.is_object()) throw config_errors({"configuration must be a JSON object"});
    if (!out_dir.empty()) j["output_dir"] = out_dir;
    if (!seed.empty()) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(seed, &used);
            if (used != seed.size() || seed[0] == '-') throw std::invalid_argument(seed);
            j["seed"] = v;
        } catch (const std::exception&) {
            throw config_errors({"--seed must be a non-negative integer, got '" + seed + "'"});
        }
    }
    return j;
}

std::string short_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string verdict_line(const check_result& c) {
    std::string s = (c.pass ? "PASS " : "FAIL ") + c.name + ": " + short_double(c.measured) + " " + c.relation +
                    " " + short_double(c.tolerance);
    if (!c.diagnostic.empty()) s += "  (" + c.diagnostic + ")";
    return s;
}

int cmd_run(const std::string& path, const std::string& out_dir, const std::string& seed, bool quiet) {
    ExperimentConfig cfg;
    try {
        cfg = parse_config(load(path, out_dir, seed));
    } catch (const config_errors& e) {
        print_errors(e);
        return exit_config;
    }
    auto rep = run(cfg);
    std::size_t passed = 0;
    for (const auto& c : rep.checks) {
        passed += c.pass;
        if (!quiet || !c.pass) std::cout << verdict_line(c) << "\n";
    }
    for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
    if (!rep.error.empty()) std::cout << "error: " << rep.error << "\n";
    std::printf("%s: %zu/%zu checks passed in %.2f s; report %s\n", rep.experiment.c_str(), passed,
                rep.checks.size(), rep.wall_clock, (std::filesystem::path(rep.output_dir) / "report.json").c_str());
    return rep.passed() ? exit_pass : exit_fail;
}

int cmd_validate(const std::string& path) {
    try {
        auto cfg = parse_config(load(path, "", ""));
        std::cout << path << ": valid " << cfg.experiment << " configuration\n" << cfg.effective.dump(2) << "\n";
        return exit_pass;
    } catch (const config_errors& e) {
        print_errors(e);
        return exit_config;
    }
}

int cmd_list() {
    for (const auto& e : experiments()) std::printf("%-22s %s\n", e.name, e.summary);
    return exit_pass;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kolmo-lab: configured numerical experiments for the kolmo library"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);

    std::string run_path, out_dir, seed, val_path;
    bool quiet = false;
    auto* run_cmd = app.add_subcommand("run", "run the experiment named in a config file");
    run_cmd->add_option("config", run_path, "JSON config file")->required();
    run_cmd->add_option("--output-dir", out_dir, "override output_dir");
    run_cmd->add_option("--seed", seed, "override the root seed");
    run_cmd->add_flag("-q,--quiet", quiet, "print failing checks only");

    auto* val_cmd = app.add_subcommand("validate", "check a config file and print the effective configuration");
    val_cmd->add_option("config", val_path, "JSON config file")->required();

    auto* list_cmd = app.add_subcommand("list-experiments", "list the experiment names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_pass : exit_config;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_path, out_dir, seed, quiet);
        if (val_cmd->parsed()) return cmd_validate(val_path);
        if (list_cmd->parsed()) return cmd_list();
    } catch (const std::exception& e) {
        std::cerr << "kolmo-lab: " << e.what() << "\n";
        return exit_fail;
    }
    return exit_config;
}
