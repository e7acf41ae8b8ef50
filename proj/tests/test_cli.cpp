#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareflow/sim.hpp"
#include "fareflow/tilecoding.hpp"
#include "fareflow/train.hpp"

using fareflow::geo::BoundingBox;
using fareflow::geo::LatLon;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

const char* cli_bin() {
    const char* bin = std::getenv("FAREFLOW_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "FAREFLOW_BIN must point at the cli binary");
    return bin;
}

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(cli_bin()) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
        r.output.append(buf, n);
    }
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::filesystem::path work_dir() {
    const auto dir = std::filesystem::path("/tmp") /
                     ("fareflow_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

// Small two-zone city plus matching coder and train configs, written to disk
// so the subprocess sees exactly what the in-process fixtures see.
void write_configs(const std::filesystem::path& dir) {
    fareflow::sim::CityModel city;
    city.bbox = BoundingBox{30.50, 30.80, 114.10, 114.45};
    city.historical_action_weights = {0.1, 0.1, 0.1, 0.1, 0.1, 0.5};
    fareflow::sim::ZoneModel a;
    a.name = "a";
    a.center = LatLon{30.60, 114.20};
    a.radius_m = 3000.0;
    a.weekday_inquiries.assign(48, 3.0);
    a.weekend_inquiries.assign(48, 2.0);
    a.weekday_supply.assign(48, 4.0);
    a.weekend_supply.assign(48, 4.0);
    a.dest_weights = {0.7, 0.3};
    a.mean_fare = 12.0;
    a.base_ecr_min = 0.2;
    a.base_ecr_max = 0.5;
    a.sensitivity_min = 3.0;
    a.sensitivity_max = 8.0;
    fareflow::sim::ZoneModel b = a;
    b.name = "b";
    b.center = LatLon{30.70, 114.35};
    b.radius_m = 4000.0;
    b.dest_weights = {0.4, 0.6};
    b.mean_fare = 25.0;
    city.zones = {a, b};
    std::ofstream(dir / "city.json") << city.to_json().dump(2);

    fareflow::geo::CodingConfig coding;
    coding.bbox = city.bbox;
    coding.hash_table_size = 1u << 12;
    std::ofstream(dir / "coding.json") << coding.to_json().dump(2);

    fareflow::train::TrainConfig train;
    train.shape.emb_rows = 1u << 12;
    train.shape.emb_dim = 8;
    train.shape.hidden1 = 16;
    train.shape.hidden2 = 8;
    train.batch_size = 16;
    train.steps = 60;
    train.target_sync_every = 20;
    std::ofstream(dir / "train.json") << train.to_json().dump(2);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version and usage behavior") {
    const RunResult version = run_cli("--version");
    CHECK(version.exit_code == 0);
    CHECK(version.output.find("fareflow") != std::string::npos);

    // No subcommand and unknown flags are usage errors.
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("gen --no-such-flag x").exit_code == 2);

    const RunResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    for (const char* sub : {"gen", "build-mdp", "train", "solve", "eval", "report"}) {
        CHECK(help.output.find(sub) != std::string::npos);
    }
}

TEST_CASE("missing and malformed inputs fail loudly") {
    const auto dir = work_dir();
    // A nonexistent --config is caught by flag validation: usage error.
    const RunResult missing = run_cli(
        "gen --config /nonexistent/city.json --out " + (dir / "gen_x").string());
    CHECK(missing.exit_code == 2);

    // A config that exists but does not parse is a runtime failure.
    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    const RunResult malformed = run_cli("gen --config " + bad.string() +
                                        " --out " + (dir / "gen_y").string());
    CHECK(malformed.exit_code == 1);
    CHECK(malformed.output.find("error") != std::string::npos);
}

TEST_CASE("gen is deterministic for a fixed seed and config") {
    const auto dir = work_dir();
    write_configs(dir);
    const std::string config = (dir / "city.json").string();

    const RunResult r1 = run_cli("gen --config " + config + " --out " +
                                 (dir / "g1").string() +
                                 " --days weekday:2,weekend:1 --seed 5");
    REQUIRE_MESSAGE(r1.exit_code == 0, r1.output);
    CHECK(r1.output.find("gen:") != std::string::npos);
    const RunResult r2 = run_cli("gen --config " + config + " --out " +
                                 (dir / "g2").string() +
                                 " --days weekday:2,weekend:1 --seed 5");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir / "g1" / "trips.jsonl") == slurp(dir / "g2" / "trips.jsonl"));

    const RunResult r3 = run_cli("gen --config " + config + " --out " +
                                 (dir / "g3").string() +
                                 " --days weekday:2,weekend:1 --seed 6");
    REQUIRE(r3.exit_code == 0);
    CHECK(slurp(dir / "g1" / "trips.jsonl") != slurp(dir / "g3" / "trips.jsonl"));

    // The run manifest records the command and its artifacts.
    const nlohmann::json man =
        nlohmann::json::parse(slurp(dir / "g1" / "gen.manifest.json"));
    CHECK(man.at("command") == "gen");
    CHECK(man.at("outputs").size() == 1);
}

TEST_CASE("the full pipeline runs end to end in a temp dir") {
    const auto dir = work_dir();
    write_configs(dir);
    const std::string city = (dir / "city.json").string();
    const std::string coding = (dir / "coding.json").string();
    const std::string train = (dir / "train.json").string();

    const RunResult gen = run_cli("gen --config " + city + " --out " +
                                  (dir / "gen").string() +
                                  " --days weekday:2,weekend:1 --seed 9");
    REQUIRE_MESSAGE(gen.exit_code == 0, gen.output);
    const std::string trips = (dir / "gen" / "trips.jsonl").string();

    const RunResult mdp = run_cli("build-mdp --trips " + trips + " --coding " +
                                  coding + " --out " + (dir / "mdp").string() +
                                  " --gamma 0.9 --reward-mode plain");
    REQUIRE_MESSAGE(mdp.exit_code == 0, mdp.output);
    CHECK(std::filesystem::exists(dir / "mdp" / "buffer.bin"));

    const RunResult tr = run_cli("train --buffer " +
                                 (dir / "mdp" / "buffer.bin").string() +
                                 " --coding " + coding + " --config " + train +
                                 " --out " + (dir / "train").string());
    REQUIRE_MESSAGE(tr.exit_code == 0, tr.output);
    const std::string ckpt = (dir / "train" / "checkpoint.bin").string();
    REQUIRE(std::filesystem::exists(ckpt));
    CHECK(std::filesystem::exists(dir / "train" / "metrics.csv"));

    // Resuming with the same total step target is a no-op that still writes
    // a fresh checkpoint.
    const RunResult resume = run_cli(
        "train --buffer " + (dir / "mdp" / "buffer.bin").string() +
        " --coding " + coding + " --config " + train + " --resume " + ckpt +
        " --out " + (dir / "train2").string());
    REQUIRE_MESSAGE(resume.exit_code == 0, resume.output);

    const RunResult ip = run_cli("solve --checkpoint " + ckpt + " --trips " +
                                 trips + " --out " + (dir / "ip").string() +
                                 " --budget historical --method ip --name ip");
    REQUIRE_MESSAGE(ip.exit_code == 0, ip.output);
    REQUIRE(std::filesystem::exists(dir / "ip" / "policy.json"));

    const RunResult greedy = run_cli(
        "solve --checkpoint " + ckpt + " --trips " + trips + " --out " +
        (dir / "greedy").string() +
        " --budget historical --method greedy --name greedy");
    REQUIRE_MESSAGE(greedy.exit_code == 0, greedy.output);

    const RunResult ev = run_cli(
        "eval --trips " + trips + " --city " + city + " --coding " + coding +
        " --checkpoint " + ckpt + " --out " + (dir / "eval").string() +
        " --budget historical --baseline historical --policy ip=" +
        (dir / "ip" / "policy.json").string() + " --policy greedy=" +
        (dir / "greedy" / "policy.json").string());
    REQUIRE_MESSAGE(ev.exit_code == 0, ev.output);
    CHECK(ev.output.find("eval: historical") != std::string::npos);
    CHECK(ev.output.find("eval: ip") != std::string::npos);
    CHECK(ev.output.find("eval: greedy") != std::string::npos);
    REQUIRE(std::filesystem::exists(dir / "eval" / "report.json"));
    CHECK(std::filesystem::exists(dir / "eval" / "report.md"));
    CHECK(std::filesystem::exists(dir / "eval" / "cells.csv"));

    // Policies produced by solve must respect the budget they were given.
    const nlohmann::json rep =
        nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
    CHECK(rep.at("any_budget_violation") == false);

    const RunResult md = run_cli("report --in " +
                                 (dir / "eval" / "report.json").string() +
                                 " --out " + (dir / "rendered.md").string());
    REQUIRE_MESSAGE(md.exit_code == 0, md.output);
    const std::string rendered = slurp(dir / "rendered.md");
    CHECK(rendered.find("# Policy comparison") != std::string::npos);
    CHECK(rendered.find("| ip |") != std::string::npos);

    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE("cli")
