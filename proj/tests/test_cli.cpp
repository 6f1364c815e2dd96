#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "driftgce/glance.hpp"
#include "driftgce/io.hpp"

namespace fs = std::filesystem;
using driftgce::read_text_file;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("driftgce_cli_" + name);
    fs::remove_all(p);
    return p;
}

Run cli(const std::string& args) {
    const fs::path base = fs::temp_directory_path() / "driftgce_cli_capture";
    const std::string cmd = std::string(DRIFTGCE_CLI) + " " + args + " >" + base.string() +
                            ".out 2>" + base.string() + ".err";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(base.string() + ".out");
    r.err = read_text_file(base.string() + ".err");
    return r;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("generate --case 4 --out " + scratch("bad").string()).code == 2);
    CHECK(cli("generate --out " + scratch("bad").string()).code == 2);
    CHECK(cli("run --case 1 --config /nonexistent.json").code == 2);
    CHECK(cli("train --data /nonexistent.csv --out x.json").code == 2);
    CHECK_FALSE(fs::exists(scratch("bad")));
    CHECK(cli("--help").code == 0);
    CHECK(cli("run --help").code == 0);
}

TEST_CASE("generate is deterministic") {
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    REQUIRE(cli("generate --case 1 --seed 7 --out " + a.string()).code == 0);
    REQUIRE(cli("generate --case 1 --seed 7 --out " + b.string()).code == 0);
    for (const char* f : {"pre.csv", "post.csv", "scenario.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(read_text_file(a / f) == read_text_file(b / f));
    }
    const auto c = scratch("gen_c");
    REQUIRE(cli("generate --case 1 --seed 8 --out " + c.string()).code == 0);
    CHECK(read_text_file(a / "pre.csv") != read_text_file(c / "pre.csv"));

    // A written config regenerates the same windows.
    const auto d = scratch("gen_d");
    REQUIRE(cli("generate --config " + (a / "scenario.json").string() + " --out " + d.string())
                .code == 0);
    CHECK(read_text_file(a / "pre.csv") == read_text_file(d / "pre.csv"));
    for (const auto& p : {a, b, c, d}) fs::remove_all(p);
}

TEST_CASE("stage by stage equals run") {
    const auto dir = scratch("stages");
    const auto run_dir = scratch("stages_run");
    const std::string o = dir.string() + "/";
    REQUIRE(cli("generate --case 2 --seed 7 --out " + dir.string()).code == 0);
    const std::string cfg = " --config " + o + "scenario.json";
    REQUIRE(cli("train --data " + o + "pre.csv --out " + o + "model_pre.json" + cfg).code == 0);
    REQUIRE(cli("train --data " + o + "post.csv --out " + o + "model_post.json" + cfg).code == 0);
    REQUIRE(cli("explain --model " + o + "model_pre.json --data " + o + "pre.csv --out " + o +
                "gce_pre.json" + cfg)
                .code == 0);
    REQUIRE(cli("explain --model " + o + "model_post.json --data " + o + "post.csv --out " + o +
                "gce_post.json" + cfg)
                .code == 0);
    const auto analyze = cli("analyze --pre-data " + o + "pre.csv --post-data " + o +
                             "post.csv --pre-model " + o + "model_pre.json --post-model " + o +
                             "model_post.json --pre-gce " + o + "gce_pre.json --post-gce " + o +
                             "gce_post.json --out " + o + "report --no-timestamp --json" + cfg);
    REQUIRE(analyze.code == 0);
    CHECK(nlohmann::json::parse(analyze.out)["headline"] == "real concept drift");

    const auto run = cli("run --case 2 --seed 7 --no-timestamp --json --out " + run_dir.string());
    REQUIRE(run.code == 0);
    const auto summary = nlohmann::json::parse(run.out);
    CHECK(summary["headline"] == "real concept drift");
    CHECK(summary["global_dmae"].get<double>() == doctest::Approx(0.5).epsilon(0.2));
    for (const char* f : {"scenario.json", "pre.csv", "post.csv", "model_pre.json",
                          "model_post.json", "gce_pre.json", "gce_post.json", "report.json",
                          "panel_a.svg", "panel_b.svg", "panel_c.svg", "panel_d.svg"}) {
        CHECK(fs::exists(run_dir / f));
    }
    CHECK(read_text_file(run_dir / "report.json") == read_text_file(dir / "report" / "report.json"));
    CHECK(read_text_file(run_dir / "panel_b.svg") == read_text_file(dir / "report" / "panel_b.svg"));

    // explain-instance at a stored centroid picks that group.
    const auto gce = driftgce::read_gce(run_dir / "gce_pre.json");
    const auto model = driftgce::read_model(run_dir / "model_pre.json");
    for (const auto& g : gce.groups) {
        if (model.predict(g.centroid) != g.class_label) continue;
        const std::string x =
            driftgce::format_double(g.centroid[0]) + "," + driftgce::format_double(g.centroid[1]);
        const auto r = cli("explain-instance --model " + (run_dir / "model_pre.json").string() +
                           " --gce " + (run_dir / "gce_pre.json").string() + " --x " + x +
                           " --json");
        REQUIRE(r.code == 0);
        CHECK(nlohmann::json::parse(r.out)["group_key"] == g.group_key);
    }
    const std::string pair = " --model " + (run_dir / "model_pre.json").string() + " --gce " +
                             (run_dir / "gce_pre.json").string();
    CHECK(cli("explain-instance" + pair + " --x 0.5").code == 2);
    CHECK(cli("explain-instance" + pair + " --x 0.5,abc").code == 2);
    CHECK(cli("explain-instance" + pair + " --x 0.5,0.4").code == 0);
    fs::remove_all(dir);
    fs::remove_all(run_dir);
}

TEST_CASE("runtime failures exit with 1 and leave no partial outputs") {
    const auto dir = scratch("fail");
    REQUIRE(cli("generate --case 1 --seed 3 --out " + dir.string()).code == 0);
    // Single-class window: training must fail.
    std::string csv = read_text_file(dir / "pre.csv");
    std::istringstream in(csv);
    std::string line, single;
    std::getline(in, line);
    single = line + "\n";
    while (std::getline(in, line)) {
        const auto first = line.find(',', line.find(',') + 1);
        single += line.substr(0, first) + ",1" + line.substr(line.find(',', first + 1)) + "\n";
    }
    driftgce::write_text_file(dir / "single.csv", single);
    const auto r = cli("train --data " + (dir / "single.csv").string() + " --out " +
                       (dir / "m.json").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("error [train]") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "m.json"));

    // Mismatched GCE provenance: analyze fails and removes the directory it created.
    const auto run_dir = scratch("fail_run");
    REQUIRE(cli("run --case 1 --seed 3 --n 300 --out " + run_dir.string()).code == 0);
    const std::string o = run_dir.string() + "/";
    const auto out_dir = scratch("fail_analyze");
    const auto a = cli("analyze --pre-data " + o + "pre.csv --post-data " + o +
                       "post.csv --pre-model " + o + "model_pre.json --post-model " + o +
                       "model_post.json --pre-gce " + o + "gce_post.json --post-gce " + o +
                       "gce_pre.json --out " + out_dir.string());
    CHECK(a.code == 1);
    CHECK(a.err.find("error [analyze]") != std::string::npos);
    CHECK_FALSE(fs::exists(out_dir));
    fs::remove_all(dir);
    fs::remove_all(run_dir);
}

TEST_CASE("panel d is skipped beyond two dimensions") {
    const auto dir = scratch("five");
    fs::create_directories(dir);
    nlohmann::json sub = nlohmann::json::array();
    const std::vector<std::vector<double>> means = {{0.2, 0.2, 0.5}, {0.2, 0.8, 0.5},
                                                    {0.8, 0.2, 0.5}, {0.8, 0.8, 0.5}};
    for (int i = 0; i < 4; ++i) {
        sub.push_back({{"id", i + 1},
                       {"label", i / 2},
                       {"weight", 1.0},
                       {"mean", means[i]},
                       {"stddev", {0.05, 0.05, 0.05}}});
    }
    const nlohmann::json cfg = {{"format_version", 1},
                                {"name", "three_dim"},
                                {"n_per_window", 300},
                                {"seed", 2},
                                {"subconcepts", sub},
                                {"drift", {{"steps", {{{"kind", "vanish"}, {"id", 4}}}}}}};
    driftgce::write_text_file(dir / "cfg.json", cfg.dump(2));
    const auto r = cli("run --config " + (dir / "cfg.json").string() + " --out " +
                       (dir / "out").string());
    CHECK(r.code == 0);
    CHECK(r.err.find("panel d skipped") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "panel_c.svg"));
    CHECK_FALSE(fs::exists(dir / "out" / "panel_d.svg"));
    fs::remove_all(dir);
}
