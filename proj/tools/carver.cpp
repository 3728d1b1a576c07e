// carver: record browser/API traffic, carve API test suites, infer OpenAPI
// specifications (optionally with active probing), replay and evaluate.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "carver/error.hpp"
#include "carver/evaluate.hpp"
#include "carver/filter.hpp"
#include "carver/fixture.hpp"
#include "carver/graph.hpp"
#include "carver/ingest.hpp"
#include "carver/probe.hpp"
#include "carver/recorder.hpp"
#include "carver/specgen.hpp"
#include "carver/testsuite.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Globals {
    std::string base_url;
    std::string out_dir = ".";
    std::string config;
    bool verbose = false;
};

struct Summary {
    std::string command;
    bool ok = false;
    std::vector<std::string> artifacts;
    ordered_json details = ordered_json::object();
    std::string error;
};

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out_dir) / name; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw carver::Error("cannot write " + path.string());
    out << text;
    if (!out) throw carver::Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw carver::Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_summary(const Globals& g, const Summary& s) {
    ordered_json j;
    j["command"] = s.command;
    j["ok"] = s.ok;
    j["artifacts"] = s.artifacts;
    j["details"] = s.details;
    if (!s.error.empty()) j["error"] = s.error;
    try {
        write_text(out_path(g, "summary.json"), j.dump(2) + "\n");
    } catch (const carver::Error& e) {
        std::cerr << "carver: " << e.what() << "\n";
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = carver::trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

ordered_json report_json(const carver::filter::FilterReport& r) {
    ordered_json j;
    j["recorded"] = r.recorded_count;
    j["kept"] = r.kept_count;
    j["dropped"] = r.dropped_total();
    j["dropped_by_filter"] = r.dropped_by_filter;
    return j;
}

// --- record -----------------------------------------------------------------

struct RecordOpts {
    std::string listen = "127.0.0.1:8080";
    std::string upstream;
    std::string out = "recording.jsonl";
    std::size_t max_body = 1 << 20;
};

int run_record(const Globals& g, const RecordOpts& o, Summary& s) {
    carver::recorder::ProxyConfig cfg;
    carver::recorder::parse_listen(o.listen, cfg);
    if (!o.upstream.empty()) cfg.upstream = o.upstream;
    cfg.log_path = o.out;
    cfg.max_body_capture = o.max_body;

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    carver::recorder::Recorder rec(cfg);
    auto port = rec.start();
    std::cerr << "recording on " << cfg.listen_host << ":" << port
              << (cfg.upstream ? " -> " + *cfg.upstream : std::string(" (forward proxy)")) << ", log " << o.out
              << "\n";
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        rec.stop();
    });
    rec.wait();
    rec.stop();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();

    auto st = rec.stats();
    s.details = {{"recorded", st.recorded},
                 {"skipped_tunnels", st.skipped_tunnels},
                 {"upstream_failures", st.upstream_failures},
                 {"port", port}};
    s.artifacts.push_back(o.out);
    if (rec.log_failed()) {
        s.error = "log write failed";
        return 1;
    }
    (void)g;
    return 0;
}

// --- carve ------------------------------------------------------------------

struct CarveOpts {
    std::string input;
    std::string filters;
    std::string out = "sequence.json";
};

int run_carve(const Globals& g, const CarveOpts& o, Summary& s) {
    carver::ingest::RecordingSource src;
    src.path = o.input;
    if (!fs::exists(src.path)) throw carver::Error("input not found: " + o.input);
    src.kind = carver::ingest::detect_kind(src.path);
    if (!g.base_url.empty()) src.base_url = g.base_url;
    auto recording = carver::ingest::load(src);

    carver::filter::FilterConfig cfg;
    if (!g.config.empty()) cfg = carver::filter::load_config(g.config);
    if (!o.filters.empty()) {
        cfg.enabled_filters.clear();
        for (const auto& f : split_list(o.filters)) cfg.enabled_filters.push_back(carver::filter::parse_filter_kind(f));
    }
    auto result = carver::filter::run_pipeline(recording.sequence, cfg);

    auto suite = carver::testsuite::emit_suite(result.sequence, carver::testsuite::Split::Single, true);
    const auto seq_path = out_path(g, o.out);
    carver::testsuite::write_suite(suite, seq_path);
    auto report = report_json(result.report);
    report["dropped_external"] = recording.dropped_external;
    report["torn_lines"] = recording.torn_lines;
    write_text(out_path(g, "filter_report.json"), report.dump(2) + "\n");

    std::cout << "recorded " << result.report.recorded_count << ", kept " << result.report.kept_count;
    for (const auto& [k, v] : result.report.dropped_by_filter) std::cout << ", " << k << " dropped " << v;
    std::cout << "\nbase url " << result.sequence.base_url << "\n";
    s.artifacts = {seq_path.string(), out_path(g, "filter_report.json").string()};
    s.details = report;
    s.details["base_url"] = result.sequence.base_url;
    return 0;
}

// --- infer ------------------------------------------------------------------

struct InferOpts {
    std::string sequence;
    bool probe = false;
    std::string target;
    std::optional<std::size_t> max_probes;
    std::optional<double> max_time;
    std::string stages;
    std::optional<bool> unsafe_methods;
    double tau = 0.0;
    std::string reset_path;
    std::string format = "yaml";
    std::string title = "Inferred API";
};

int run_infer(const Globals& g, const InferOpts& o, Summary& s) {
    auto suite = carver::testsuite::read_suite(o.sequence);
    auto seq = carver::testsuite::to_sequence(suite);
    if (!g.base_url.empty()) seq.base_url = g.base_url;
    auto graph = carver::graph::build_api_graph(seq.calls, seq.base_url, o.tau);

    if (o.probe) {
        carver::probe::ProbeBudget budget;
        if (!g.config.empty()) budget = carver::probe::load_budget(g.config);
        if (o.max_probes) budget.max_probes_executed = *o.max_probes;
        if (o.max_time) budget.max_wall_time = std::chrono::milliseconds(static_cast<long long>(*o.max_time * 1000));
        if (!o.stages.empty()) {
            budget.stages_enabled.clear();
            for (const auto& st : split_list(o.stages)) budget.stages_enabled.insert(carver::probe::parse_strategy(st));
        }
        if (o.unsafe_methods) budget.unsafe_methods = *o.unsafe_methods;

        carver::testsuite::HttpTransport transport;
        carver::probe::ExecutionTarget target{&transport, o.target, std::nullopt};
        if (!o.reset_path.empty()) target.reset_path = o.reset_path;
        auto result = carver::probe::expand(seq, graph, budget, target);
        if (g.verbose) {
            for (const auto& st : result.stages) {
                std::cerr << "pass " << st.pass << " " << carver::probe::to_string(st.strategy) << ": "
                          << st.probes.size() << " probes, " << st.successes.size() << " kept\n";
                for (const auto& p : st.successes) {
                    std::cerr << "  + " << carver::to_string(p.call.request.method) << " " << p.call.request.url
                              << " -> " << p.call.response.status << "\n";
                }
            }
        }
        graph = std::move(result.graph);
        seq = std::move(result.sequence);
        auto augmented = carver::testsuite::emit_suite(seq, carver::testsuite::Split::Single, true);
        carver::testsuite::write_suite(augmented, out_path(g, "augmented.json"));
        write_text(out_path(g, "probe_stats.json"), result.stats_json().dump(2) + "\n");
        s.artifacts.push_back(out_path(g, "augmented.json").string());
        s.artifacts.push_back(out_path(g, "probe_stats.json").string());
        s.details["probe"] = result.stats_json();
    }

    auto merged = carver::specgen::merge_leaf_nodes(graph);
    carver::specgen::SpecConfig cfg;
    cfg.title = o.title;
    auto doc = carver::specgen::extract_openapi(merged, cfg);
    const bool yaml = o.format == "yaml";
    const auto spec_path = out_path(g, yaml ? "openapi.yaml" : "openapi.json");
    write_text(spec_path, carver::specgen::render_openapi(doc, yaml ? carver::specgen::Format::Yaml
                                                                    : carver::specgen::Format::Json));
    write_text(out_path(g, "graph.dot"), carver::graph::to_dot(merged));
    s.artifacts.insert(s.artifacts.begin(), spec_path.string());
    s.artifacts.push_back(out_path(g, "graph.dot").string());

    ordered_json paths = ordered_json::array();
    for (const auto& [k, item] : doc.path_items) {
        paths.push_back(k);
        std::cout << k;
        for (const auto& [m, op] : item.operations) std::cout << " " << carver::to_string(m);
        std::cout << "\n";
    }
    s.details["paths"] = paths;
    s.details["graph_nodes"] = merged.node_count();
    return 0;
}

// --- emit-tests ---------------------------------------------------------------

struct EmitOpts {
    std::string sequence;
    std::string split = "single";
    std::string out = "tests.json";
};

int run_emit(const Globals& g, const EmitOpts& o, Summary& s) {
    auto seq = carver::testsuite::to_sequence(carver::testsuite::read_suite(o.sequence));
    if (!g.base_url.empty()) seq.base_url = g.base_url;
    auto split = o.split == "per-checkpoint" ? carver::testsuite::Split::PerCheckpoint : carver::testsuite::Split::Single;
    auto suite = carver::testsuite::emit_suite(seq, split);
    const auto path = out_path(g, o.out);
    carver::testsuite::write_suite(suite, path);
    std::cout << suite.cases.size() << " test cases, " << suite.step_count() << " steps\n";
    s.artifacts.push_back(path.string());
    s.details = {{"cases", suite.cases.size()}, {"steps", suite.step_count()}};
    return 0;
}

// --- replay -------------------------------------------------------------------

struct ReplayOpts {
    std::string suite;
    std::string target;
    std::string report_json;
};

int run_replay(const Globals& g, const ReplayOpts& o, Summary& s) {
    auto suite = carver::testsuite::read_suite(o.suite);
    std::string target = o.target.empty() ? (g.base_url.empty() ? suite.base_url : g.base_url) : o.target;
    carver::testsuite::HttpTransport transport;
    auto report = carver::testsuite::replay(suite, transport, target);
    std::cout << report.to_table();
    const auto path = o.report_json.empty() ? out_path(g, "report.json") : fs::path(o.report_json);
    write_text(path, report.to_json().dump(2) + "\n");
    s.artifacts.push_back(path.string());
    s.details = {{"total", report.total}, {"passed", report.passed}, {"failed", report.failed},
                 {"wall_time_ms", report.wall_time_ms}};
    return report.failed == 0 ? 0 : 1;
}

// --- evaluate -----------------------------------------------------------------

struct EvalOpts {
    std::string gen;
    std::string gt;
    bool loose = false;
    std::string ignore = "OPTIONS,HEAD";
};

void print_prf(const char* name, const carver::evaluate::PrfScore& p) {
    std::cout << std::left << std::setw(16) << name << std::fixed << std::setprecision(3) << " precision "
              << p.precision << "  recall " << p.recall << "  f1 " << p.f1 << "  duplication " << p.duplication
              << "\n";
}

int run_evaluate(const Globals& g, const EvalOpts& o, Summary& s) {
    auto gen = carver::specgen::parse_openapi(read_text(o.gen));
    auto gt = carver::specgen::parse_openapi(read_text(o.gt));
    carver::evaluate::MatchOptions opts;
    opts.loose = o.loose;
    opts.ignore_methods.clear();
    for (const auto& m : split_list(o.ignore)) {
        auto method = carver::parse_method(m);
        if (!method) throw carver::Error("unknown method in --ignore-methods: " + m);
        opts.ignore_methods.insert(*method);
    }
    auto metrics = carver::evaluate::score(gen, gt, opts);
    auto diff = carver::evaluate::diff_report(gen, gt, opts);
    print_prf("paths", metrics.paths);
    print_prf("operations", metrics.operations);
    print_prf("operations*", metrics.operations_star);
    std::cout << diff.to_text();
    write_text(out_path(g, "metrics.json"), metrics.to_json().dump(2) + "\n");
    write_text(out_path(g, "diff.json"), diff.to_json().dump(2) + "\n");
    s.artifacts = {out_path(g, "metrics.json").string(), out_path(g, "diff.json").string()};
    s.details = metrics.to_json();
    return 0;
}

// --- fixture-serve --------------------------------------------------------------

struct FixtureOpts {
    std::string listen = "127.0.0.1:8081";
    std::string write_gt;
};

int run_fixture(const Globals& g, const FixtureOpts& o, Summary& s) {
    carver::recorder::ProxyConfig addr;
    carver::recorder::parse_listen(o.listen, addr);
    if (!o.write_gt.empty()) {
        write_text(o.write_gt, std::string(carver::fixture::ground_truth_yaml()));
        s.artifacts.push_back(o.write_gt);
    }
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    carver::fixture::FixtureServer server;
    server.start(addr.listen_host, addr.listen_port);
    std::cerr << "fixture on " << server.base_url() << " (reset: POST " << server.reset_url() << ")\n";
    s.details = {{"base_url", server.base_url()}, {"reset_url", server.reset_url()}};
    write_summary(g, Summary{s.command, true, s.artifacts, s.details, {}});
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"carver: API test carving and OpenAPI inference from recorded traffic"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--base-url", g.base_url, "Base URL of the API under analysis");
    app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
    app.add_option("--config", g.config, "TOML or JSON configuration file");
    app.add_flag("-v,--verbose", g.verbose, "Verbose progress output");

    RecordOpts rec;
    auto* record = app.add_subcommand("record", "Run a recording HTTP proxy");
    record->add_option("--listen", rec.listen, "host:port to listen on")->capture_default_str();
    record->add_option("--upstream", rec.upstream, "Reverse-proxy to this origin instead of forwarding");
    record->add_option("--out", rec.out, "JSONL log file (appended)")->capture_default_str();
    record->add_option("--max-body", rec.max_body, "Body capture limit in bytes")->check(CLI::PositiveNumber);

    CarveOpts carve;
    auto* carve_cmd = app.add_subcommand("carve", "Ingest a HAR/JSONL recording and filter API calls");
    carve_cmd->add_option("--input", carve.input, "HAR or JSONL recording")->required();
    carve_cmd->add_option("--filters", carve.filters, "Comma list of filters: operation,status,mime");
    carve_cmd->add_option("--out", carve.out, "Sequence file name")->capture_default_str();

    InferOpts infer;
    auto* infer_cmd = app.add_subcommand("infer", "Infer an OpenAPI specification from a sequence file");
    infer_cmd->add_option("--sequence", infer.sequence, "Sequence file written by carve")->required();
    auto* probe_flag = infer_cmd->add_flag("--probe", infer.probe, "Probe a live instance to expand the graph");
    auto* target_opt = infer_cmd->add_option("--target", infer.target, "Base URL of the instance to probe");
    probe_flag->needs(target_opt);
    infer_cmd->add_option("--max-probes", infer.max_probes, "Upper bound on executed probes");
    infer_cmd->add_option("--max-time", infer.max_time, "Upper bound on probing time in seconds");
    infer_cmd->add_option("--stages", infer.stages, "Comma list: intermediate,bipartite,response,operation");
    infer_cmd->add_option("--unsafe-methods", infer.unsafe_methods, "Allow POST/PUT/PATCH/DELETE probes (true/false)");
    infer_cmd->add_option("--tau", infer.tau, "Response similarity threshold")->check(CLI::Range(0.0, 1.0));
    infer_cmd->add_option("--reset-path", infer.reset_path, "POSTed before each probing replay (path or URL)");
    infer_cmd->add_option("--format", infer.format, "yaml or json")
        ->check(CLI::IsMember({"yaml", "json"}))
        ->capture_default_str();
    infer_cmd->add_option("--title", infer.title, "info.title of the generated document");

    EmitOpts emit;
    auto* emit_cmd = app.add_subcommand("emit-tests", "Write an API test suite from a sequence file");
    emit_cmd->add_option("--sequence", emit.sequence, "Sequence or augmented sequence file")->required();
    emit_cmd->add_option("--split", emit.split, "single or per-checkpoint")
        ->check(CLI::IsMember({"single", "per-checkpoint"}))
        ->capture_default_str();
    emit_cmd->add_option("--out", emit.out, "Suite file name")->capture_default_str();

    ReplayOpts replay;
    auto* replay_cmd = app.add_subcommand("replay", "Replay a test suite and report");
    replay_cmd->add_option("--suite", replay.suite, "Suite file")->required();
    replay_cmd->add_option("--target", replay.target, "Base URL to replay against");
    replay_cmd->add_option("--report-json", replay.report_json, "JSON report path");

    EvalOpts eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a generated spec against a ground-truth spec");
    eval_cmd->add_option("--gen", eval.gen, "Generated OpenAPI file")->required();
    eval_cmd->add_option("--gt", eval.gt, "Ground-truth OpenAPI/Swagger file")->required();
    eval_cmd->add_flag("--loose", eval.loose, "Let parameters match literal segments");
    eval_cmd->add_option("--ignore-methods", eval.ignore, "Methods left out of the starred metrics")
        ->capture_default_str();

    FixtureOpts fix;
    auto* fixture_cmd = app.add_subcommand("fixture-serve", "Serve the built-in example API");
    fixture_cmd->add_option("--listen", fix.listen, "host:port")->capture_default_str();
    fixture_cmd->add_option("--write-gt", fix.write_gt, "Write the ground-truth OpenAPI file here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    Summary s;
    s.command = app.get_subcommands().front()->get_name();
    int code = 1;
    try {
        fs::create_directories(g.out_dir);
        if (*record) code = run_record(g, rec, s);
        else if (*carve_cmd) code = run_carve(g, carve, s);
        else if (*infer_cmd) code = run_infer(g, infer, s);
        else if (*emit_cmd) code = run_emit(g, emit, s);
        else if (*replay_cmd) code = run_replay(g, replay, s);
        else if (*eval_cmd) code = run_evaluate(g, eval, s);
        else if (*fixture_cmd) code = run_fixture(g, fix, s);
    } catch (const std::exception& e) {
        s.error = e.what();
        std::cerr << "carver " << s.command << ": " << s.error << "\n";
        code = 1;
    }
    s.ok = code == 0 || (s.command == "replay" && !s.artifacts.empty());
    write_summary(g, s);
    return code;
}
