#include "spinsq/experiment.hpp"
#include "spinsq/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace spinsq;
using nlohmann::json;
namespace fs = std::filesystem;

#ifndef SPINSQ_CLI_PATH
#error "SPINSQ_CLI_PATH must name the CLI binary"
#endif

namespace {

json base_sweep() {
    return json{{"kind", "sweep"},
                {"t_final", 5.0},
                {"threads", 1},
                {"model", {{"n_spins", 2}, {"fock_cutoff", 2}}},
                {"sweep", {{"lo", -0.2}, {"hi", 0.2}, {"step", 0.2}, {"roots", false}}}};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spinsq_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SPINSQ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(format_exact(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_exact(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_short(1.0 / 3.0) == "0.3333333333");
}

TEST_CASE("control CSV round trip") {
    ControlSignal c;
    c.t0 = 0.0;
    c.dt_ctrl = 0.5;
    c.values = {0.1, -1.0 / 3.0, 2.569, 1e-17};
    const ControlSignal back = parse_control_csv(control_csv(c));
    CHECK(back.t0 == c.t0);
    CHECK(back.dt_ctrl == c.dt_ctrl);
    CHECK(back.values == c.values);
    CHECK(control_csv(back) == control_csv(c));
    CHECK_THROWS(parse_control_csv("time,value\n0,1\n"));
    CHECK_THROWS(parse_control_csv("t,zeta\n0,1\n0.5,1\n2.0,1\n"));
}

TEST_CASE("atomic text files") {
    const fs::path d = scratch("files");
    write_text_file(d / "a.txt", "hello\n");
    CHECK(read_text_file(d / "a.txt") == "hello\n");
    write_text_file(d / "a.txt", "again\n");
    CHECK(read_text_file(d / "a.txt") == "again\n");
    CHECK_THROWS(read_text_file(d / "missing.txt"));
    fs::remove_all(d);
}

TEST_CASE("config parsing is strict and round-trips") {
    const ExperimentConfig c = parse_config(base_sweep());
    CHECK(c.kind == RunKind::sweep);
    CHECK(c.model.n_spins == 2);
    CHECK(c.sweep_step == 0.2);
    const ExperimentConfig again = parse_config(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));

    json bad = base_sweep();
    bad["model"]["spins"] = 3;
    try {
        parse_config(bad);
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(e.path.find("model") != std::string::npos);
    }
    json top = base_sweep();
    top["colour"] = "red";
    CHECK_THROWS_AS(parse_config(top), ConfigError);
    json type = base_sweep();
    type["t_final"] = "long";
    CHECK_THROWS_AS(parse_config(type), ConfigError);
    json negative = base_sweep();
    negative["model"]["g"] = -1.0;
    CHECK_THROWS_AS(parse_config(negative), ConfigError);
    json train = base_sweep();
    train["kind"] = "train";
    CHECK_THROWS_AS(parse_config(train), ConfigError);  // seed required
    CHECK_THROWS_AS(run_kind_from_string("dance"), ConfigError);

    json doc = base_sweep();
    apply_override(doc, "model.g=0.5");
    apply_override(doc, "output=custom_dir");
    apply_override(doc, "agent.hidden=[16,16]");
    const ExperimentConfig o = parse_config(doc);
    CHECK(o.model.g == 0.5);
    CHECK(o.output == "custom_dir");
    CHECK(o.agent.hidden == std::vector<int>{16, 16});
    CHECK_THROWS(apply_override(doc, "no_equals_sign"));

    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("runs are reproducible byte for byte") {
    const fs::path d = scratch("run");
    const ExperimentConfig c = parse_config(base_sweep());
    const RunOutcome a = run_experiment(c, d / "a");
    const RunOutcome b = run_experiment(c, d / "b");
    CHECK(fs::exists(d / "a" / "sweep.csv"));
    CHECK(fs::exists(d / "a" / "manifest.json"));
    CHECK_FALSE(fs::exists(d / "a.partial"));
    CHECK(a.manifest["artifacts"] == b.manifest["artifacts"]);
    CHECK(read_text_file(d / "a" / "sweep.csv") == read_text_file(d / "b" / "sweep.csv"));
    // a directory without a manifest is never overwritten
    fs::create_directories(d / "keep");
    write_text_file(d / "keep" / "precious.txt", "x");
    CHECK_THROWS(run_experiment(c, d / "keep"));
    CHECK(fs::exists(d / "keep" / "precious.txt"));
    fs::remove_all(d);
}

TEST_CASE("command line: exit codes and rerun") {
    const fs::path d = scratch("cli");
    {
        std::ofstream(d / "sweep.json") << base_sweep().dump(2);
        json bad = base_sweep();
        bad["model"]["bogus"] = 1;
        std::ofstream(d / "bad.json") << bad.dump(2);
        std::ofstream(d / "broken.json") << "{ not json";
    }
    const std::string cfg = (d / "sweep.json").string();
    CHECK(run_cli("sweep -c " + cfg + " -o " + (d / "out").string()) == 0);
    CHECK(fs::exists(d / "out" / "sweep.csv"));
    CHECK(run_cli("rerun " + (d / "out" / "manifest.json").string() + " -o " + (d / "again").string()) == 0);
    CHECK(read_text_file(d / "out" / "sweep.csv") == read_text_file(d / "again" / "sweep.csv"));
    CHECK(run_cli("sweep -c " + (d / "bad.json").string() + " -o " + (d / "x").string()) == 2);
    CHECK(run_cli("sweep -c " + (d / "broken.json").string() + " -o " + (d / "x").string()) == 2);
    CHECK(run_cli("train -c " + cfg + " -o " + (d / "x").string()) == 2);  // kind mismatch
    CHECK(run_cli("sweep -c " + cfg + " --set model.n_spins=0 -o " + (d / "x").string()) == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK_FALSE(fs::exists(d / "x"));
    fs::remove_all(d);
}
