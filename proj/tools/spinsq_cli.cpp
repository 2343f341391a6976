// spinsq — run one experiment from a JSON config.
//
//   spinsq <kind> [--config FILE] [--set key.path=value ...] [--output DIR]
//   spinsq rerun MANIFEST [--output DIR]
//
// Runs land in $SPINSQ_OUTPUT_ROOT/<config.output> unless --output is given.
// Exit status: 0 success, 2 configuration error, 3 numerical failure, 1 anything else.

#include "spinsq/experiment.hpp"
#include "spinsq/io.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace spinsq;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

json load_document(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("not valid JSON: ") + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(path, e.what());
    }
}

int execute(const json& doc, const std::string& output_override) {
    const ExperimentConfig cfg = parse_config(doc);
    const std::filesystem::path dir = output_override.empty() ? output_root() / cfg.output : std::filesystem::path(output_override);
    const RunOutcome r = run_experiment(cfg, dir);
    std::cout << to_string(cfg.kind) << ": wrote " << r.directory.string() << " (" << r.manifest["artifacts"].size()
              << " artifacts, " << r.manifest["wall_time_s"].get<double>() << " s)\n"
              << r.summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spin squeezing in a modulated spin-cavity model: sweeps, learning and combined controls"};
    app.require_subcommand(1);
    std::string config_path, output, manifest_path;
    std::vector<std::string> overrides;

    std::vector<std::pair<CLI::App*, std::string>> kinds;
    for (const char* kind : {"sweep", "train", "combine", "validate-effective", "trajectory", "n-scan", "gamma-scan",
                             "angle-track"}) {
        CLI::App* sub = app.add_subcommand(kind, std::string("run a '") + kind + "' experiment");
        sub->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("-s,--set", overrides, "override a config field: key.path=value");
        sub->add_option("-o,--output", output, "run directory (default: $SPINSQ_OUTPUT_ROOT/<output>)");
        kinds.emplace_back(sub, kind);
    }
    CLI::App* rerun = app.add_subcommand("rerun", "repeat a run from its manifest.json");
    rerun->add_option("manifest", manifest_path, "manifest.json of a previous run")->required()->check(CLI::ExistingFile);
    rerun->add_option("-o,--output", output, "run directory for the repeat");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (rerun->parsed()) {
            const json manifest = load_document(manifest_path);
            if (!manifest.contains("config")) throw ConfigError(manifest_path, "no 'config' section");
            json doc = manifest["config"];
            if (output.empty()) output = (std::filesystem::path(manifest_path).parent_path().string() + "_rerun");
            const int rc = execute(doc, output);
            const json again = json::parse(read_text_file(std::filesystem::path(output) / "manifest.json"));
            const bool same = again["artifacts"] == manifest["artifacts"];
            std::cout << (same ? "rerun: artifacts byte-identical\n" : "rerun: artifacts DIFFER\n");
            return same ? rc : 1;
        }
        for (const auto& [sub, kind] : kinds) {
            if (!sub->parsed()) continue;
            json doc = load_document(config_path);
            if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
            if (doc.contains("kind") && doc["kind"] != kind) {
                throw ConfigError("kind", "config is for '" + doc["kind"].dump() + "' but the subcommand is '" + kind + "'");
            }
            doc["kind"] = kind;
            for (const auto& o : overrides) apply_override(doc, o);
            return execute(doc, output);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << " (t = " << e.time << ")\n";
        return kExitNumerical;
    } catch (const PipelineError& e) {
        std::cerr << "pipeline stage '" << e.stage << "' failed: " << e.what() << "\n";
        return e.numerical ? kExitNumerical : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
