// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line front end, run as subprocesses
// against the built binary. The binary path comes from the CRMLAB_BIN
// environment variable (set by ctest); a build-tree fallback keeps direct
// ./unit_tests runs working.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string binary_path() {
    if (const char* env = std::getenv("CRMLAB_BIN")) {
        return env;
    }
    // Commands below cd into scratch directories, so the fallback has to be
    // rooted where the test process started.
    const fs::path fallback = fs::absolute(fs::path("..") / "tools" / "crmlab");
    if (fs::exists(fallback)) {
        return fallback.string();
    }
    return {};
}

struct CmdResult {
    int exit_code = -1;
    std::string output;  // interleaved stdout + stderr
};

CmdResult run_cli(const fs::path& dir, const std::string& args) {
    const std::string cmd =
        "cd '" + dir.string() + "' && '" + binary_path() + "' " + args + " 2>&1";
    CmdResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) {
        result.output += buf;
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("crmlab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) {
        n += c == '\n' ? 1 : 0;
    }
    return n;
}

double value_after(const std::string& output, const std::string& key) {
    const auto pos = output.find(key + "=");
    REQUIRE(pos != std::string::npos);
    return std::stod(output.substr(pos + key.size() + 1));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("binary is reachable") {
    REQUIRE_FALSE(binary_path().empty());
    const auto help = run_cli(fs::temp_directory_path(), "--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("gen-data") != std::string::npos);
}

TEST_CASE("gen-data writes a schema-tagged dataset deterministically") {
    const auto dir = fresh_dir("gen_data");
    const auto first = run_cli(dir, "gen-data --n 40 --seed 9 --out a.jsonl");
    REQUIRE(first.exit_code == 0);
    const auto second = run_cli(dir, "gen-data --n 40 --seed 9 --out b.jsonl");
    REQUIRE(second.exit_code == 0);

    const std::string a = slurp(dir / "a.jsonl");
    CHECK(a == slurp(dir / "b.jsonl"));
    CHECK(a.find("crmlab.dataset.v1") != std::string::npos);
    CHECK(count_lines(a) == 41);  // schema header + one line per trajectory

    // A different seed must change the bytes.
    const auto third = run_cli(dir, "gen-data --n 40 --seed 10 --out c.jsonl");
    REQUIRE(third.exit_code == 0);
    CHECK(a != slurp(dir / "c.jsonl"));
}

TEST_CASE("train-rm then score round-trips through files") {
    const auto dir = fresh_dir("train_score");
    REQUIRE(run_cli(dir, "gen-data --n 60 --seed 3 --out data.jsonl").exit_code == 0);
    const auto train = run_cli(
        dir, "train-rm --data data.jsonl --kind crm --epochs 3 --seed 4 --out crm.json");
    REQUIRE(train.exit_code == 0);

    const std::string model = slurp(dir / "crm.json");
    CHECK(model.find("crmlab.model.v1") != std::string::npos);
    const std::string loss = slurp(dir / "crm.json.loss.csv");
    CHECK(loss.find("crmlab.rm_loss.v1") != std::string::npos);
    CHECK(count_lines(loss) == 5);  // schema + header + one row per epoch

    const auto score =
        run_cli(dir, "score --model crm.json --data data.jsonl --out scores.csv");
    REQUIRE(score.exit_code == 0);
    const std::string scores = slurp(dir / "scores.csv");
    CHECK(scores.find("crmlab.scores.v1") != std::string::npos);
    CHECK(count_lines(scores) == 62);  // schema + header + one row per trajectory
}

TEST_CASE("snapshot re-run reproduces identical bytes") {
    const auto dir = fresh_dir("snapshot");
    const auto again = fresh_dir("snapshot_rerun");
    REQUIRE(run_cli(dir, "gen-data --n 30 --seed 12 --out data.jsonl").exit_code == 0);
    const std::string snap = (dir / "data.jsonl.config").string();
    const auto rerun = run_cli(again, "gen-data --config '" + snap + "' --threads 1");
    REQUIRE(rerun.exit_code == 0);
    CHECK(slurp(dir / "data.jsonl") == slurp(again / "data.jsonl"));

    // Flags still beat the snapshot: a different seed changes the output.
    const auto override_run = run_cli(
        again, "gen-data --config '" + snap + "' --seed 13 --out other.jsonl");
    REQUIRE(override_run.exit_code == 0);
    CHECK(slurp(dir / "data.jsonl") != slurp(again / "other.jsonl"));
}

TEST_CASE("metrics reports the exact text scores") {
    const auto dir = fresh_dir("metrics");
    std::ofstream(dir / "text.txt") << "a b a b a b";
    const auto run = run_cli(dir, "metrics --text text.txt");
    REQUIRE(run.exit_code == 0);
    CHECK(value_after(run.output, "repeat_score") == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(value_after(run.output, "reflection_score") == doctest::Approx(0.0));
}

TEST_CASE("missing required options fail with a clear message") {
    const auto dir = fresh_dir("errors");
    const auto no_data = run_cli(dir, "train-rm --out m.json");
    CHECK(no_data.exit_code != 0);
    CHECK(no_data.output.find("--data") != std::string::npos);

    const auto no_sub = run_cli(dir, "");
    CHECK(no_sub.exit_code != 0);

    const auto bad_reward = run_cli(dir, "rl --reward nosuch --out rl.csv");
    CHECK(bad_reward.exit_code != 0);

    const auto missing_file = run_cli(dir, "score --model nope.json --data nope.jsonl --out s.csv");
    CHECK(missing_file.exit_code != 0);
}

TEST_CASE("report rejects inputs bearing the wrong schema") {
    const auto dir = fresh_dir("report_schema");
    std::ofstream(dir / "bogus.csv") << "# schema=crmlab.other.v1\niteration\n0\n";
    const auto run = run_cli(dir, "report --rl bogus.csv --out report.json");
    CHECK(run.exit_code != 0);
    CHECK(run.output.find("schema") != std::string::npos);
}

}  // TEST_SUITE
