// driftgce: generate scenarios, train models, build group counterfactual
// explanations and analyze drift between two windows.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "driftgce/drift.hpp"
#include "driftgce/io.hpp"
#include "driftgce/pipeline.hpp"
#include "driftgce/svg.hpp"

namespace fs = std::filesystem;
using namespace driftgce;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Files written by one command; removed again if the command fails.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void open() {
        if (dir_.empty()) return;
        if (!fs::exists(dir_)) {
            fs::create_directories(dir_);
            created_ = true;
        } else if (!fs::is_directory(dir_)) {
            throw std::runtime_error("output path is not a directory: " + dir_.string());
        }
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::string& name, const std::string& text) {
        const auto p = path(name);
        files_.push_back(p);
        write_text_file(p, text);
    }

    void track(const fs::path& p) { files_.push_back(p); }

    void rollback() noexcept {
        std::error_code ec;
        for (const auto& f : files_) fs::remove(f, ec);
        if (created_) fs::remove(dir_, ec);
    }

    const std::vector<fs::path>& files() const { return files_; }

private:
    fs::path dir_;
    bool created_ = false;
    std::vector<fs::path> files_;
};

struct Common {
    std::optional<int> case_id;
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n;
    std::string out_dir = "out";
    bool json_output = false;
    bool no_timestamp = false;
    std::optional<std::string> arch;
    std::optional<std::size_t> epochs;
    std::optional<std::string> method;
    std::optional<std::size_t> k_max;
};

ScenarioConfig load_scenario(const Common& c) {
    if (c.case_id && !c.config_file.empty()) throw UsageError("use either --case or --config");
    if (!c.case_id && c.config_file.empty()) throw UsageError("one of --case or --config is required");
    ScenarioConfig s;
    if (c.case_id) {
        s = build_case(*c.case_id, c.n.value_or(1000), c.seed.value_or(0));
        s.extra["case"] = *c.case_id;
    } else {
        s = read_scenario(c.config_file);
        if (c.n) s.n_per_window = *c.n;
        if (c.seed) s.seed = *c.seed;
    }
    return s;
}

PipelineConfig load_pipeline(const Common& c) {
    PipelineConfig p = resolve_pipeline_config(load_scenario(c));
    if (c.arch) p.train.architecture = architecture_from_string(*c.arch);
    if (c.epochs) p.train.epochs = *c.epochs;
    if (c.method) p.explain.base.method = ce_method_from_string(*c.method);
    if (c.k_max) p.explain.k_max = *c.k_max;
    p.train.validate();
    return p;
}

SvgOptions svg_options(const Common& c) {
    SvgOptions o;
    o.timestamp = !c.no_timestamp;
    return o;
}

void print_json_or(const Common& c, const json& summary, const std::string& text) {
    if (c.json_output) {
        std::cout << summary.dump(2) << '\n';
    } else {
        std::cout << text;
    }
}

json files_json(const Outputs& out) {
    json a = json::array();
    for (const auto& f : out.files()) a.push_back(f.string());
    return a;
}

void write_report_outputs(Outputs& out, const DriftReport& report, const SampleWindow& pre,
                          const SampleWindow& post, const SvgOptions& svg, std::string& notice) {
    const json doc = report_to_json(report);
    out.write("report.json", doc.dump(2) + "\n");
    out.write("panel_a.svg", render_panel_a(doc, svg));
    out.write("panel_b.svg", render_panel_b(doc, svg));
    out.write("panel_c.svg", render_panel_c(doc, svg));
    if (auto d = render_panel_d(doc, pre, post, svg)) {
        out.write("panel_d.svg", *d);
    } else {
        notice = "panel d skipped: feature-space view needs d = 2 (data has d = " +
                 std::to_string(report.dim) + ")";
    }
}

std::string report_text(const DriftReport& r) {
    std::ostringstream s;
    s << "headline: " << r.headline << '\n';
    for (const auto& f : r.findings) s << "  - " << f << '\n';
    return s.str();
}

template <class F>
auto in_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

// ---- subcommands ---------------------------------------------------------------

void cmd_generate(const Common& c) {
    const ScenarioConfig s = in_stage("config", [&] { return load_scenario(c); });
    Outputs out(c.out_dir);
    try {
        out.open();
        auto [pre, post] = in_stage("generate", [&] { return generate_windows(s); });
        in_stage("write", [&] {
            out.write("pre.csv", window_to_csv(pre));
            out.write("post.csv", window_to_csv(post));
            out.write("scenario.json", scenario_to_json(s).dump(2) + "\n");
            return 0;
        });
        print_json_or(c,
                      {{"command", "generate"}, {"scenario", s.name}, {"files", files_json(out)}},
                      "wrote " + out.path("pre.csv").string() + ", " + out.path("post.csv").string() +
                          ", " + out.path("scenario.json").string() + "\n");
    } catch (...) {
        out.rollback();
        throw;
    }
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_file;
};

void cmd_train(const Common& c, const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_file.empty()) {
        const auto s = read_scenario(a.config_file);
        cfg = resolve_pipeline_config(s).train;
    }
    if (c.seed) cfg.seed = *c.seed;
    if (c.arch) cfg.architecture = architecture_from_string(*c.arch);
    if (c.epochs) cfg.epochs = *c.epochs;
    cfg.validate();
    const auto window = in_stage("load", [&] { return read_window_csv(a.data, WindowTag::pre); });
    const auto model = in_stage("train", [&] { return train(window, cfg); });
    Outputs out(fs::path(a.out).parent_path());
    try {
        out.open();
        out.track(a.out);
        in_stage("write", [&] {
            write_model(model, a.out);
            return 0;
        });
    } catch (...) {
        out.rollback();
        throw;
    }
    const double acc = model.accuracy(window.features, window.labels);
    print_json_or(c,
                  {{"command", "train"},
                   {"model", a.out},
                   {"hash", hex_hash(model.hash())},
                   {"train_accuracy", acc}},
                  "wrote " + a.out + " (training accuracy " + std::to_string(acc) + ")\n");
}

struct ExplainArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string config_file;
};

void cmd_explain(const Common& c, const ExplainArgs& a) {
    ExplainOptions opts;
    if (!a.config_file.empty()) opts = resolve_pipeline_config(read_scenario(a.config_file)).explain;
    if (c.seed) opts.seed = *c.seed;
    if (c.method) opts.base.method = ce_method_from_string(*c.method);
    if (c.k_max) opts.k_max = *c.k_max;
    const auto model = in_stage("load", [&] { return read_model(a.model); });
    const auto window = in_stage("load", [&] { return read_window_csv(a.data, WindowTag::pre); });
    const auto gce = in_stage("explain", [&] { return explain_window(model, window, opts); });
    Outputs out(fs::path(a.out).parent_path());
    try {
        out.open();
        out.track(a.out);
        in_stage("write", [&] {
            write_gce(gce, a.out);
            return 0;
        });
    } catch (...) {
        out.rollback();
        throw;
    }
    const auto losses = group_losses(model, gce, window);
    json groups = json::array();
    std::ostringstream text;
    text << "wrote " << a.out << '\n';
    for (const auto& g : gce.groups) {
        groups.push_back({{"key", g.group_key}, {"weight", g.weight}, {"validity", g.validity}});
        text << "  " << g.group_key << ": weight " << g.weight << ", validity " << g.validity
             << ", cfav " << format_vector(g.cfav) << '\n';
    }
    text << "  validity " << losses.validity << ", proximity " << losses.proximity << '\n';
    print_json_or(c,
                  {{"command", "explain"},
                   {"gce", a.out},
                   {"groups", groups},
                   {"validity", losses.validity},
                   {"proximity", losses.proximity}},
                  text.str());
}

struct AnalyzeArgs {
    std::string pre_data, post_data, pre_model, post_model, pre_gce, post_gce, config_file;
    std::string name;  // default: the config's name, else "custom"
};

void cmd_analyze(const Common& c, const AnalyzeArgs& a) {
    AnalysisThresholds th;
    std::string name = a.name.empty() ? "custom" : a.name;
    if (!a.config_file.empty()) {
        const auto scenario = read_scenario(a.config_file);
        th = resolve_pipeline_config(scenario).thresholds;
        if (a.name.empty()) name = scenario.name;
    }
    const auto pre = in_stage("load", [&] { return read_window_csv(a.pre_data, WindowTag::pre); });
    const auto post = in_stage("load", [&] { return read_window_csv(a.post_data, WindowTag::post); });
    const auto h_pre = in_stage("load", [&] { return read_model(a.pre_model); });
    const auto h_post = in_stage("load", [&] { return read_model(a.post_model); });
    const auto g_pre = in_stage("load", [&] { return read_gce(a.pre_gce); });
    const auto g_post = in_stage("load", [&] { return read_gce(a.post_gce); });
    const auto report = in_stage("analyze", [&] {
        return build_report({pre, post, h_pre, h_post, g_pre, g_post, name}, th);
    });
    Outputs out(c.out_dir);
    std::string notice;
    try {
        out.open();
        in_stage("render", [&] {
            write_report_outputs(out, report, pre, post, svg_options(c), notice);
            return 0;
        });
    } catch (...) {
        out.rollback();
        throw;
    }
    if (!notice.empty()) std::cerr << "notice: " << notice << '\n';
    print_json_or(c,
                  {{"command", "analyze"},
                   {"headline", report.headline},
                   {"global_dmae", report.global_dmae},
                   {"files", files_json(out)}},
                  report_text(report));
}

void cmd_run(const Common& c) {
    const PipelineConfig cfg = in_stage("config", [&] { return load_pipeline(c); });
    Outputs out(c.out_dir);
    std::string notice;
    PipelineResult r = [&] {
        try {
            out.open();
            return run_pipeline(cfg);
        } catch (...) {
            out.rollback();
            throw;
        }
    }();
    try {
        in_stage("write", [&] {
            out.write("scenario.json", scenario_to_json(resolved_scenario(cfg)).dump(2) + "\n");
            out.write("pre.csv", window_to_csv(r.pre));
            out.write("post.csv", window_to_csv(r.post));
            out.track(out.path("model_pre.json"));
            write_model(r.h_pre, out.path("model_pre.json"));
            out.track(out.path("model_post.json"));
            write_model(r.h_post, out.path("model_post.json"));
            out.track(out.path("gce_pre.json"));
            write_gce(r.gce_pre, out.path("gce_pre.json"));
            out.track(out.path("gce_post.json"));
            write_gce(r.gce_post, out.path("gce_post.json"));
            return 0;
        });
        in_stage("render", [&] {
            write_report_outputs(out, r.report, r.pre, r.post, svg_options(c), notice);
            return 0;
        });
    } catch (...) {
        out.rollback();
        throw;
    }
    if (!notice.empty()) std::cerr << "notice: " << notice << '\n';
    print_json_or(c,
                  {{"command", "run"},
                   {"scenario", cfg.scenario.name},
                   {"headline", r.report.headline},
                   {"global_dmae", r.report.global_dmae},
                   {"files", files_json(out)}},
                  report_text(r.report) + "outputs in " + c.out_dir + "\n");
}

struct InstanceArgs {
    std::string model;
    std::string gce;
    std::string x;
};

Vector parse_vector(const std::string& s) {
    Vector v;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("--x: not a number: '" + item + "'");
        }
    }
    if (v.empty()) throw UsageError("--x: empty vector");
    return v;
}

void cmd_explain_instance(const Common& c, const InstanceArgs& a) {
    const auto model = in_stage("load", [&] { return read_model(a.model); });
    const auto gce = in_stage("load", [&] { return read_gce(a.gce); });
    const Vector x = parse_vector(a.x);
    if (x.size() != model.dim()) {
        throw UsageError("--x has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(model.dim()));
    }
    const auto assigned = in_stage("explain-instance", [&] { return assign_cfav(gce, model, x); });
    const Vector moved = add(x, assigned.cfav);
    const int before = model.predict(x);
    const int after = model.predict(moved);
    print_json_or(c,
                  {{"command", "explain-instance"},
                   {"group_key", assigned.group_key},
                   {"cfav", assigned.cfav},
                   {"prediction", before},
                   {"counterfactual_prediction", after},
                   {"flipped", before != after}},
                  "group: " + assigned.group_key + "\ncfav: " + format_vector(assigned.cfav) +
                      "\nprediction: " + std::to_string(before) + " -> " + std::to_string(after) +
                      (before != after ? " (flipped)\n" : " (not flipped)\n"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept drift analysis with group counterfactual explanations"};
    app.require_subcommand(1);
    Common common;

    auto add_source = [&](CLI::App* sub) {
        sub->add_option("--case", common.case_id, "built-in case study")->check(CLI::Range(1, 3));
        sub->add_option("--config", common.config_file, "scenario config file")
            ->check(CLI::ExistingFile);
        sub->add_option("--n", common.n, "samples per window")->check(CLI::Range(1, 10000000));
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "master seed");
        sub->add_flag("--json", common.json_output, "machine-readable summary on stdout");
    };
    auto add_model_flags = [&](CLI::App* sub) {
        sub->add_option("--arch", common.arch, "classifier: logistic or mlp")
            ->check(CLI::IsMember({"logistic", "mlp"}));
        sub->add_option("--epochs", common.epochs, "training epochs")->check(CLI::PositiveNumber);
    };
    auto add_explain_flags = [&](CLI::App* sub) {
        sub->add_option("--method", common.method, "base counterfactuals: face or wachter")
            ->check(CLI::IsMember({"face", "wachter"}));
        sub->add_option("--k-max", common.k_max, "largest group count per class")
            ->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("generate", "write pre/post CSV windows and the scenario file");
    add_source(gen);
    add_common(gen);
    gen->add_option("--out", common.out_dir, "output directory");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "train a classifier on one CSV window");
    tr->add_option("--data", train_args.data, "window CSV")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", train_args.out, "model file")->required();
    tr->add_option("--config", train_args.config_file, "scenario config with classifier settings")
        ->check(CLI::ExistingFile);
    add_common(tr);
    add_model_flags(tr);

    ExplainArgs explain_args;
    auto* ex = app.add_subcommand("explain", "group counterfactual explanations of one window");
    ex->add_option("--model", explain_args.model, "model file")->required()->check(CLI::ExistingFile);
    ex->add_option("--data", explain_args.data, "window CSV")->required()->check(CLI::ExistingFile);
    ex->add_option("--out", explain_args.out, "GCE file")->required();
    ex->add_option("--config", explain_args.config_file, "scenario config with explainer settings")
        ->check(CLI::ExistingFile);
    add_common(ex);
    add_explain_flags(ex);

    AnalyzeArgs analyze_args;
    auto* an = app.add_subcommand("analyze", "compare pre/post artifacts and render the report");
    for (auto [flag, target] : {std::pair{"--pre-data", &analyze_args.pre_data},
                                {"--post-data", &analyze_args.post_data},
                                {"--pre-model", &analyze_args.pre_model},
                                {"--post-model", &analyze_args.post_model},
                                {"--pre-gce", &analyze_args.pre_gce},
                                {"--post-gce", &analyze_args.post_gce}}) {
        an->add_option(flag, *target)->required()->check(CLI::ExistingFile);
    }
    an->add_option("--config", analyze_args.config_file, "scenario config with analysis thresholds")
        ->check(CLI::ExistingFile);
    an->add_option("--name", analyze_args.name, "scenario name recorded in the report");
    an->add_option("--out", common.out_dir, "output directory");
    an->add_flag("--no-timestamp", common.no_timestamp, "omit the generation time from SVG panels");
    an->add_flag("--json", common.json_output, "machine-readable summary on stdout");

    auto* run = app.add_subcommand("run", "full pipeline: generate, train, explain, analyze");
    add_source(run);
    add_common(run);
    add_model_flags(run);
    add_explain_flags(run);
    run->add_option("--out", common.out_dir, "output directory");
    run->add_flag("--no-timestamp", common.no_timestamp, "omit the generation time from SVG panels");

    InstanceArgs instance_args;
    auto* inst = app.add_subcommand("explain-instance", "assign a group CFAV to one point");
    inst->add_option("--model", instance_args.model, "model file")->required()->check(CLI::ExistingFile);
    inst->add_option("--gce", instance_args.gce, "GCE file")->required()->check(CLI::ExistingFile);
    inst->add_option("--x", instance_args.x, "comma-separated feature values")->required();
    inst->add_flag("--json", common.json_output, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) cmd_generate(common);
        if (*tr) cmd_train(common, train_args);
        if (*ex) cmd_explain(common, explain_args);
        if (*an) cmd_analyze(common, analyze_args);
        if (*run) cmd_run(common);
        if (*inst) cmd_explain_instance(common, instance_args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const StageError& e) {
        std::cerr << "error " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
