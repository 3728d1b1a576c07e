#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <json.hpp>

#include "carver/evaluate.hpp"
#include "carver/filter.hpp"
#include "carver/graph.hpp"
#include "carver/specgen.hpp"
#include "carver/testsuite.hpp"
#include "oracle.hpp"

using namespace carver;
using nlohmann::json;
using similarity::KeyTree;

namespace {

json random_json(std::mt19937& rng, int depth) {
    static const std::vector<std::string> keys{"id", "name", "tags", "owner", "meta", "count", "items"};
    std::uniform_int_distribution<int> kind(0, depth > 0 ? 5 : 3);
    switch (kind(rng)) {
        case 0: return std::uniform_int_distribution<int>(-100, 100)(rng);
        case 1: return "s" + std::to_string(rng() % 1000);
        case 2: return rng() % 2 == 0;
        case 3: return nullptr;
        case 4: {
            json arr = json::array();
            for (int i = 0, n = int(rng() % 4); i < n; ++i) arr.push_back(random_json(rng, depth - 1));
            return arr;
        }
        default: {
            json obj = json::object();
            for (int i = 0, n = int(rng() % 4); i < n; ++i) obj[keys[rng() % keys.size()]] = random_json(rng, depth - 1);
            return obj;
        }
    }
}

// Replaces every scalar by another scalar, keeping keys and containers.
json mutate_scalars(std::mt19937& rng, const json& v) {
    if (v.is_object()) {
        json out = json::object();
        for (const auto& [k, x] : v.items()) out[k] = mutate_scalars(rng, x);
        return out;
    }
    if (v.is_array()) {
        json out = json::array();
        for (const auto& x : v) out.push_back(mutate_scalars(rng, x));
        return out;
    }
    switch (rng() % 4) {
        case 0: return int(rng() % 5000);
        case 1: return "m" + std::to_string(rng());
        case 2: return 3.5;
        default: return nullptr;
    }
}

ApiCall random_call(std::mt19937& rng, const std::string& base) {
    static const std::vector<std::string> words{"users", "u1", "u2", "items", "7", "8", "info", "tags"};
    static const std::vector<std::string> bodies{R"({"id":1,"name":"x"})", R"({"title":"t"})", R"([{"k":1}])", ""};
    std::string path;
    for (int i = 0, n = 1 + int(rng() % 3); i < n; ++i) path += "/" + words[rng() % words.size()];
    const auto& body = bodies[rng() % bodies.size()];
    auto method = rng() % 4 == 0 ? HttpMethod::Post : HttpMethod::Get;
    return support::make_call(method, base + path, 200, body);
}

std::vector<specgen::UriTemplate> templates_matching(const specgen::SpecDocument& doc,
                                                     const std::vector<std::string>& segs) {
    std::vector<specgen::UriTemplate> out;
    for (const auto& [k, item] : doc.path_items) {
        if (item.uri_template.matches(segs)) out.push_back(item.uri_template);
    }
    return out;
}

}  // namespace

TEST(Property, TedMatchesExhaustiveOracle) {
    auto trees = support::all_trees(5, {"a", "b"});
    ASSERT_GT(trees.size(), 500u);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < trees.size(); ++i) {
        for (std::size_t j = i; j < trees.size(); ++j) {
            ASSERT_EQ(similarity::tree_edit_distance(trees[i], trees[j]), support::brute_force_ted(trees[i], trees[j]))
                << trees[i].to_string() << " vs " << trees[j].to_string();
            ++checked;
        }
    }
    EXPECT_GT(checked, 100000u);
}

TEST(Property, TedIsAMetric) {
    std::mt19937 rng(7);
    const std::vector<std::string> labels{"a", "b", "c"};
    for (int i = 0; i < 300; ++i) {
        auto a = support::random_tree(rng, 9, labels);
        auto b = support::random_tree(rng, 9, labels);
        auto c = support::random_tree(rng, 9, labels);
        auto ab = similarity::tree_edit_distance(a, b), bc = similarity::tree_edit_distance(b, c);
        auto ac = similarity::tree_edit_distance(a, c);
        EXPECT_LE(ac, ab + bc);
        EXPECT_EQ(ab, similarity::tree_edit_distance(b, a));
        EXPECT_EQ(similarity::tree_edit_distance(a, a), 0u);
        EXPECT_EQ(ab == 0, a.to_string() == b.to_string());
    }
}

TEST(Property, KeyTreesIgnoreValues) {
    std::mt19937 rng(11);
    for (int i = 0; i < 1000; ++i) {
        json v = random_json(rng, 4);
        json w = mutate_scalars(rng, v);
        auto a = similarity::key_tree(v.dump(), "application/json");
        auto b = similarity::key_tree(w.dump(), "application/json");
        ASSERT_EQ(a.to_string(), b.to_string()) << v.dump() << " / " << w.dump();
        EXPECT_TRUE(similarity::compare_responses({v.dump(), "application/json"}, {w.dump(), "application/json"}));
    }
}

void expect_sound(const std::vector<ApiCall>& calls, const std::string& base, int round) {
    auto doc = specgen::extract_openapi(graph::build_api_graph(calls, base));
    for (const auto& c : calls) {
        auto matching = templates_matching(doc, parse_path(c.request.url, base));
        ASSERT_FALSE(matching.empty()) << c.request.url;
        std::size_t best = 0;
        for (const auto& t : matching) best = std::max(best, t.literal_count());
        auto n_best = std::count_if(matching.begin(), matching.end(),
                                    [&](const specgen::UriTemplate& t) { return t.literal_count() == best; });
        std::string names;
        for (const auto& t : matching) names += " " + t.render();
        EXPECT_EQ(n_best, 1) << c.request.url << " in round " << round << ", matched by" << names;
    }
    std::set<std::string> shapes;
    for (const auto& [k, item] : doc.path_items) {
        std::string shape;
        for (const auto& seg : item.uri_template.segments) shape += seg.is_parameter ? "/{}" : "/" + seg.text;
        EXPECT_TRUE(shapes.insert(shape).second) << k;
    }
}

TEST(Property, TemplatesAreSoundOnResourceCorpora) {
    std::mt19937 rng(3);
    for (int round = 0; round < 300; ++round)
        expect_sound(support::random_api_corpus(rng, "http://h/api", 1 + rng() % 50), "http://h/api", round);
}

// Responses drawn independently of paths, so the same URI may answer with
// different shapes.
TEST(Property, TemplatesAreSoundOnArbitraryCorpora) {
    std::mt19937 rng(3);
    const std::string base = "http://h/api";
    for (int round = 0; round < 300; ++round) {
        std::vector<ApiCall> calls;
        for (int i = 0, n = 1 + int(rng() % 50); i < n; ++i) calls.push_back(random_call(rng, base));
        expect_sound(calls, base, round);
    }
}

TEST(Property, FilterPipelineIsIdempotent) {
    std::mt19937 rng(5);
    const std::vector<std::string> mimes{"application/json", "text/html", "image/png", "application/xml", ""};
    const std::vector<int> statuses{200, 201, 204, 301, 304, 404, 500};
    for (int round = 0; round < 100; ++round) {
        ApiSequence seq;
        seq.base_url = "http://h";
        for (int i = 0; i < 30; ++i) {
            auto method = static_cast<HttpMethod>(rng() % 7);
            auto c = support::make_call(method, "http://h/r" + std::to_string(i), statuses[rng() % statuses.size()],
                                        rng() % 3 ? "{}" : "", mimes[rng() % mimes.size()]);
            seq.calls.push_back(c);
        }
        seq.reindex();
        auto once = filter::run_pipeline(seq);
        auto twice = filter::run_pipeline(once.sequence);
        EXPECT_EQ(twice.sequence, once.sequence);
        EXPECT_EQ(twice.report.dropped_total(), 0u);
        EXPECT_EQ(once.report.kept_count + once.report.dropped_total(), once.report.recorded_count);
    }
}

TEST(Property, GraphGrowsMonotonically) {
    std::mt19937 rng(13);
    const std::string base = "http://h/api";
    for (int round = 0; round < 50; ++round) {
        std::vector<ApiCall> calls;
        for (int i = 0; i < 25; ++i) calls.push_back(random_call(rng, base));
        std::shuffle(calls.begin(), calls.end(), rng);
        graph::ApiGraph g(base);
        for (std::size_t cut = 0; cut < calls.size(); cut += 5) {
            auto before_edges = g.edges();
            auto before_nodes = g.node_count();
            std::vector<std::string> names;
            for (std::size_t n = 0; n < before_nodes; ++n) names.push_back(g.node(n).name);
            std::vector<ApiCall> chunk(calls.begin() + cut, calls.begin() + std::min(cut + 5, calls.size()));
            graph::build_api_graph(chunk, g);
            EXPECT_GE(g.node_count(), before_nodes);
            for (const auto& e : before_edges) EXPECT_TRUE(g.has_edge(e.first, e.second));
            for (std::size_t n = 0; n < before_nodes; ++n) EXPECT_EQ(g.node(n).name, names[n]);
        }
        // Every inserted URI is still reachable.
        for (const auto& c : calls) EXPECT_TRUE(g.find_path(parse_path(c.request.url, base)).has_value());
    }
}

TEST(Property, SelfScoreIsPerfect) {
    std::mt19937 rng(17);
    const std::vector<std::string> lits{"a", "b", "c", "d"};
    for (int round = 0; round < 100; ++round) {
        specgen::SpecDocument doc;
        for (int i = 0, n = int(rng() % 8); i < n; ++i) {
            std::string path;
            for (int d = 0, len = 1 + int(rng() % 3); d < len; ++d) path += rng() % 3 == 0 ? "/{id}" : "/" + lits[rng() % lits.size()];
            specgen::PathItem item;
            item.uri_template = specgen::UriTemplate::parse(path);
            for (int m = 0; m < 7; ++m) {
                if (rng() % 3 == 0) item.operations[static_cast<HttpMethod>(m)].responses[200] = {};
            }
            doc.path_items[item.uri_template.render()] = item;
        }
        auto s = evaluate::score(doc, doc);
        for (const auto* p : {&s.paths, &s.operations, &s.operations_star}) {
            EXPECT_DOUBLE_EQ(p->precision, 1.0);
            EXPECT_DOUBLE_EQ(p->recall, 1.0);
            EXPECT_DOUBLE_EQ(p->f1, 1.0);
            EXPECT_TRUE(p->fp.empty() && p->fn.empty());
        }
    }
}

TEST(Property, SuiteRoundTrips) {
    std::mt19937 rng(19);
    for (int round = 0; round < 100; ++round) {
        ApiSequence seq;
        seq.base_url = "http://h/api";
        for (int i = 0, n = int(rng() % 12); i < n; ++i) {
            auto c = random_call(rng, seq.base_url);
            if (rng() % 4 == 0) c.request.headers.emplace_back("Cookie", "session=s" + std::to_string(i));
            if (rng() % 5 == 0) c.response.headers.emplace_back("Set-Cookie", "session=x" + std::to_string(i));
            if (c.request.method == HttpMethod::Post) c.request.body = "{\"n\":" + std::to_string(i) + "}";
            c.response.status = rng() % 5 == 0 ? 302 : 200;
            seq.calls.push_back(c);
        }
        seq.reindex();
        for (auto split : {testsuite::Split::Single, testsuite::Split::PerCheckpoint}) {
            auto suite = testsuite::emit_suite(seq, split, true);
            auto j = testsuite::to_json(suite);
            auto back = testsuite::suite_from_json(json::parse(j.dump()));
            EXPECT_EQ(testsuite::to_json(back).dump(), j.dump());
            EXPECT_EQ(back.step_count(), seq.calls.size());
            auto again = testsuite::to_sequence(back);
            ASSERT_EQ(again.calls.size(), seq.calls.size());
            for (std::size_t i = 0; i < seq.calls.size(); ++i) {
                EXPECT_EQ(again.calls[i].request.method, seq.calls[i].request.method);
                EXPECT_EQ(again.calls[i].request.url, seq.calls[i].request.url);
                EXPECT_EQ(again.calls[i].response.status, seq.calls[i].response.status);
                EXPECT_EQ(again.calls[i].response.body, seq.calls[i].response.body);
            }
        }
    }
}
