// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "carver/evaluate.hpp"
#include "carver/filter.hpp"
#include "carver/fixture.hpp"
#include "carver/graph.hpp"
#include "carver/ingest.hpp"
#include "carver/probe.hpp"
#include "carver/recorder.hpp"
#include "carver/specgen.hpp"
#include "carver/testsuite.hpp"
#include "oracle.hpp"

using namespace carver;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kMaxRuntimeSeconds = 10.0;
constexpr double kExact = 1e-12;
constexpr std::size_t kValueBlindPayloads = 1000;
constexpr std::size_t kMaxCorpusPaths = 50;
constexpr std::size_t kSyntheticCalls = 200;
constexpr std::size_t kSyntheticJson = 60;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::set<std::string> shapes(const specgen::SpecDocument& doc) {
    std::set<std::string> out;
    for (const auto& [k, item] : doc.path_items) {
        std::string s;
        for (const auto& seg : item.uri_template.segments) s += "/" + (seg.is_parameter ? std::string("{v}") : seg.text);
        out.insert(s.empty() ? "/" : s);
    }
    return out;
}

std::string join(const std::set<std::string>& items) {
    std::string out;
    for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
    return "{" + out + "}";
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Shared state built by criterion 1 and reused by 2, 5, 6 and 8.
struct Session {
    fixture::FixtureServer server;
    support::TempDir dir;
    ApiSequence carved;
    graph::ApiGraph initial;
    std::optional<probe::ExpansionResult> expansion;
    specgen::SpecDocument inferred;
};

void record(Session& s, std::size_t& sent) {
    recorder::ProxyConfig cfg;
    cfg.upstream = s.server.root_url();
    cfg.log_path = s.dir / "session.jsonl";
    recorder::Recorder rec(cfg);
    auto port = rec.start();
    const std::string proxied = "http://127.0.0.1:" + std::to_string(port) + "/api";
    testsuite::HttpTransport http;
    auto calls = support::running_example(proxied).calls;
    HttpRequest articles;
    articles.url = proxied + "/articles";
    calls.push_back({articles, {}, 0, Origin::Recorded});
    for (auto& c : calls) {
        if (c.request.body) c.request.headers.emplace_back("Content-Type", "application/json");
        if (!http.send(c.request).response) throw Error("request through recorder failed: " + c.request.url);
        ++sent;
    }
    for (int i = 0; i < 500 && rec.stats().recorded < sent; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    rec.stop();
}

Outcome criterion1(Session& s) {
    auto start = Clock::now();
    s.server.start();
    std::size_t sent = 0;
    record(s, sent);
    s.server.reset();

    // carve
    auto recording = ingest::load({ingest::SourceKind::Jsonl, s.dir / "session.jsonl", s.server.base_url()});
    auto filtered = filter::run_pipeline(recording.sequence);
    testsuite::write_suite(testsuite::emit_suite(filtered.sequence, testsuite::Split::Single, true), s.dir / "sequence.json");

    // infer --probe
    s.carved = testsuite::to_sequence(testsuite::read_suite(s.dir / "sequence.json"));
    s.initial = graph::build_api_graph(s.carved.calls, s.carved.base_url);
    testsuite::HttpTransport http;
    s.expansion = probe::expand(s.carved, s.initial, {}, {&http, s.server.base_url(), s.server.reset_url()});
    s.inferred = specgen::extract_openapi(s.expansion->graph);
    double elapsed = seconds_since(start);

    const std::set<std::string> want{"/users", "/users/{v}", "/users/{v}/info", "/users/{v}/follow", "/articles",
                                     "/articles/{v}", "/articles/{v}/comments", "/tags", "/tags/{v}"};
    auto got = shapes(s.inferred);
    std::ostringstream d;
    d << "recorded=" << sent << " kept=" << filtered.report.kept_count << " paths=" << join(got) << " runtime=" << elapsed
      << "s";
    return {got == want && elapsed < kMaxRuntimeSeconds, d.str()};
}

std::set<std::string> generated(const Session& s, std::size_t pass, probe::Strategy strategy) {
    std::set<std::string> out;
    for (const auto& st : s.expansion->stages) {
        if (st.pass != pass || st.strategy != strategy) continue;
        for (const auto& p : st.probes)
            out.insert(std::string(to_string(p.request.method)) + " " + relative_path(p.request.url, s.server.base_url()));
    }
    return out;
}

Outcome criterion2(const Session& s) {
    if (!s.expansion) return {false, "no expansion available"};
    auto stage1 = generated(s, 0, probe::Strategy::Intermediate);
    auto stage2 = generated(s, 0, probe::Strategy::Bipartite);
    auto stage3 = generated(s, 0, probe::Strategy::Response);
    bool ok = stage1 == std::set<std::string>{"GET /users", "GET /users/user1"} && stage2.contains("GET /users/user2/follow");
    for (const auto* t : {"GET /tags/1", "GET /tags/id", "GET /tags/tag2", "GET /tags/author"}) ok = ok && stage3.contains(t);
    std::ostringstream d;
    d << "stage1=" << join(stage1) << " stage2=" << join(stage2) << " stage3 size=" << stage3.size();
    return {ok, d.str()};
}

Outcome criterion3() {
    auto seq = support::scheduling_example("http://h/api");
    auto g = graph::build_api_graph(seq.calls, seq.base_url);
    auto cps = probe::find_checkpoints(seq);
    auto slots_for = [&](const std::string& path) {
        probe::Probe p;
        p.request.url = seq.base_url + path;
        return probe::schedule(p, seq, g, cps);
    };
    auto user1 = slots_for("/users/user1");
    auto tag1 = slots_for("/tags/1");
    auto show = [](const std::vector<std::size_t>& v) {
        std::string out;
        for (auto x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
        return "{" + out + "}";
    };
    return {user1.size() == 1 && tag1.size() == 3, "users/user1 slots=" + show(user1) + " tags/1 slots=" + show(tag1)};
}

Outcome criterion4() {
    std::vector<ApiCall> calls{support::make_call(HttpMethod::Get, "http://h/api/items/1", 200, R"({"id":1})"),
                               support::make_call(HttpMethod::Patch, "http://h/api/items/1", 200, R"({"id":1})")};
    calls[1].request.body = R"({"id":1})";
    auto g = graph::build_api_graph(calls, "http://h/api");
    auto probes = probe::gen_operation(g, calls);
    std::set<std::string> methods;
    for (const auto& p : probes) methods.insert(std::string(to_string(p.request.method)));
    return {probes.size() == 5, "probes=" + std::to_string(probes.size()) + " methods=" + join(methods)};
}

Outcome criterion5(const Session& s) {
    auto gt = specgen::parse_openapi(fixture::ground_truth_yaml());
    auto self = evaluate::score(gt, gt);
    bool ok = true;
    for (const auto* p : {&self.paths, &self.operations, &self.operations_star})
        for (double v : {p->precision, p->recall, p->f1}) ok = ok && std::abs(v - 1.0) < kExact;
    auto m = evaluate::score(s.inferred, gt);
    auto diff = evaluate::diff_report(s.inferred, gt);
    bool inferred_ok = std::abs(m.paths.precision - 1.0) < kExact && std::abs(m.operations_star.precision - 1.0) < kExact;
    std::ostringstream d;
    d << "self=" << (ok ? "all 1.0" : "not 1.0") << " path Pr=" << m.paths.precision << " Re=" << m.paths.recall
      << " op Pr=" << m.operations.precision << " op Pr*=" << m.operations_star.precision
      << " undocumented=" << diff.inconsistencies.size();
    return {ok && inferred_ok, d.str()};
}

Outcome criterion6(Session& s) {
    auto suite = testsuite::emit_suite(s.carved, testsuite::Split::PerCheckpoint);
    testsuite::HttpTransport http;
    std::size_t passed = 0, total = 0;
    double wall = 0.0;
    bool ok = true;
    for (int run = 0; run < 2; ++run) {
        s.server.reset();
        auto report = testsuite::replay(suite, http, s.server.base_url());
        ok = ok && report.total > 0 && report.passed == report.total;
        passed += report.passed;
        total += report.total;
        wall += report.wall_time_ms;
    }
    std::ostringstream d;
    d << "passed=" << passed << "/" << total << " over 2 runs, replay wall time=" << wall / 2 << "ms per run";
    return {ok, d.str()};
}

json random_json(std::mt19937& rng, int depth) {
    static const std::vector<std::string> keys{"id", "name", "tags", "owner", "items"};
    switch (rng() % (depth > 0 ? 6 : 4)) {
        case 0: return int(rng() % 100);
        case 1: return "s" + std::to_string(rng() % 100);
        case 2: return rng() % 2 == 0;
        case 3: return nullptr;
        case 4: {
            json a = json::array();
            for (int i = 0, n = int(rng() % 4); i < n; ++i) a.push_back(random_json(rng, depth - 1));
            return a;
        }
        default: {
            json o = json::object();
            for (int i = 0, n = int(rng() % 4); i < n; ++i) o[keys[rng() % keys.size()]] = random_json(rng, depth - 1);
            return o;
        }
    }
}

json mutate(std::mt19937& rng, const json& v) {
    if (v.is_object()) {
        json o = json::object();
        for (const auto& [k, x] : v.items()) o[k] = mutate(rng, x);
        return o;
    }
    if (v.is_array()) {
        json a = json::array();
        for (const auto& x : v) a.push_back(mutate(rng, x));
        return a;
    }
    return rng() % 2 ? json(int(rng() % 9999)) : json("z" + std::to_string(rng()));
}

ApiCall random_call(std::mt19937& rng) {
    static const std::vector<std::string> words{"users", "u1", "u2", "items", "7", "8", "info"};
    static const std::vector<std::string> bodies{R"({"id":1,"name":"x"})", R"({"title":"t"})", R"([{"k":1}])", ""};
    std::string path;
    for (int i = 0, n = 1 + int(rng() % 3); i < n; ++i) path += "/" + words[rng() % words.size()];
    return support::make_call(HttpMethod::Get, "http://h/api" + path, 200, bodies[rng() % bodies.size()]);
}

Outcome criterion7() {
    std::mt19937 rng(2024);
    std::vector<std::string> failures;

    auto trees = support::all_trees(5, {"a", "b"});
    std::size_t ted_pairs = 0;
    bool ted_ok = true;
    for (std::size_t i = 0; i < trees.size() && ted_ok; ++i)
        for (std::size_t j = 0; j < trees.size() && ted_ok; ++j, ++ted_pairs)
            ted_ok = similarity::tree_edit_distance(trees[i], trees[j]) == support::brute_force_ted(trees[i], trees[j]);
    if (!ted_ok) failures.push_back("ted");

    bool blind = true;
    for (std::size_t i = 0; i < kValueBlindPayloads && blind; ++i) {
        auto v = random_json(rng, 4);
        blind = similarity::compare_responses({v.dump(), "application/json"}, {mutate(rng, v).dump(), "application/json"});
    }
    if (!blind) failures.push_back("value-blindness");

    bool sound = true;
    for (int round = 0; round < 200 && sound; ++round) {
        std::vector<ApiCall> calls;
        if (round % 2 == 0) {
            calls = support::random_api_corpus(rng, "http://h/api", 1 + rng() % kMaxCorpusPaths);
        } else {
            for (std::size_t i = 0, n = 1 + rng() % kMaxCorpusPaths; i < n; ++i) calls.push_back(random_call(rng));
        }
        auto doc = specgen::extract_openapi(graph::build_api_graph(calls, "http://h/api"));
        for (const auto& c : calls) {
            auto segs = parse_path(c.request.url, "http://h/api");
            std::size_t best = 0, n_best = 0, n = 0;
            for (const auto& [k, item] : doc.path_items) {
                if (!item.uri_template.matches(segs)) continue;
                ++n;
                auto lc = item.uri_template.literal_count();
                if (lc > best || n == 1) best = lc, n_best = 0;
                if (lc == best) ++n_best;
            }
            sound = sound && n > 0 && n_best == 1;
        }
    }
    if (!sound) failures.push_back("template-soundness");

    bool idempotent = true;
    for (int round = 0; round < 50 && idempotent; ++round) {
        ApiSequence seq;
        seq.base_url = "http://h";
        for (int i = 0; i < 30; ++i) {
            static const std::vector<std::string> mimes{"application/json", "text/html", "image/png", ""};
            seq.calls.push_back(support::make_call(static_cast<HttpMethod>(rng() % 7), "http://h/r" + std::to_string(i),
                                                   rng() % 4 ? 200 : 404, rng() % 3 ? "{}" : "", mimes[rng() % mimes.size()]));
        }
        seq.reindex();
        auto once = filter::run_pipeline(seq);
        idempotent = filter::run_pipeline(once.sequence).sequence == once.sequence;
    }
    if (!idempotent) failures.push_back("filter-idempotence");

    bool monotone = true;
    for (int round = 0; round < 30 && monotone; ++round) {
        std::vector<ApiCall> calls;
        for (int i = 0; i < 25; ++i) calls.push_back(random_call(rng));
        std::shuffle(calls.begin(), calls.end(), rng);
        graph::ApiGraph g("http://h/api");
        for (const auto& c : calls) {
            auto before = g.edges();
            graph::build_api_graph({c}, g);
            for (const auto& e : before) monotone = monotone && g.has_edge(e.first, e.second);
        }
    }
    if (!monotone) failures.push_back("graph-monotonicity");

    std::string failed;
    for (const auto& f : failures) failed += " " + f;
    return {failures.empty(), "ted pairs=" + std::to_string(ted_pairs) + " payloads=" + std::to_string(kValueBlindPayloads) +
                                  (failed.empty() ? "" : " failed:" + failed)};
}

Outcome criterion8(const Session& s) {
    ApiSequence seq;
    seq.base_url = "http://h/api";
    for (std::size_t i = 0; i < kSyntheticCalls; ++i) {
        // Every 10 calls: 3 JSON, 4 HTML, 3 images.
        auto slot = i % 10;
        if (slot < 3)
            seq.calls.push_back(support::make_call(HttpMethod::Get, seq.base_url + "/r/" + std::to_string(i), 200, R"({"id":1})"));
        else if (slot < 7)
            seq.calls.push_back(support::make_call(HttpMethod::Get, seq.base_url + "/page/" + std::to_string(i), 200,
                                                   "<html></html>", "text/html"));
        else
            seq.calls.push_back(support::make_call(HttpMethod::Get, seq.base_url + "/img/" + std::to_string(i) + ".png", 200,
                                                   "\x89PNG", "image/png"));
    }
    seq.reindex();
    auto result = filter::run_pipeline(seq);
    const auto& r = result.report;
    bool ok = r.recorded_count == kSyntheticCalls && r.kept_count == kSyntheticJson;
    std::ostringstream d;
    d << "recorded=" << r.recorded_count << " kept=" << r.kept_count << " dropped=" << r.dropped_total();
    if (!s.expansion) return {false, d.str() + " no probe stats"};
    for (auto strategy : probe::kStageOrder) {
        auto it = s.expansion->stats.find(strategy);
        if (it == s.expansion->stats.end()) {
            ok = false;
            d << " " << to_string(strategy) << "=missing";
            continue;
        }
        const auto& st = it->second;
        ok = ok && st.executed >= st.generated && st.generated > 0;
        d << " " << to_string(strategy) << "=" << st.generated << "/" << st.executed << "/" << st.succeeded;
    }
    return {ok, d.str()};
}

}  // namespace

int main() {
    Session session;
    bool all = true;
    auto report = [&](int n, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
    };
    report(1, [&] { return criterion1(session); });
    report(2, [&] { return criterion2(session); });
    report(3, [] { return criterion3(); });
    report(4, [] { return criterion4(); });
    report(5, [&] { return criterion5(session); });
    report(6, [&] { return criterion6(session); });
    report(7, [] { return criterion7(); });
    report(8, [&] { return criterion8(session); });
    session.server.stop();
    return all ? 0 : 1;
}
