#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "carver/graph.hpp"
#include "oracle.hpp"

using namespace carver;
using namespace carver::graph;
using support::make_call;

namespace {

const std::string kBase = "http://h/api";

// GET user1/info, user2/info, user2, tags.
std::vector<ApiCall> four_calls() {
    auto seq = support::running_example(kBase);
    std::vector<ApiCall> calls;
    for (const auto& c : seq.calls) {
        if (c.request.method == HttpMethod::Get) calls.push_back(c);
    }
    return calls;
}

std::vector<std::string> names(const ApiGraph& g, const std::vector<NodeId>& ids) {
    std::vector<std::string> out;
    for (auto id : ids) out.push_back(g.node(id).name);
    return out;
}

std::set<std::string> rendered_complete_paths(const ApiGraph& g) {
    std::set<std::string> out;
    for (const auto& p : complete_paths(g)) out.insert(g.render(p));
    return out;
}

}  // namespace

TEST(BuildGraph, RunningExampleShape) {
    auto g = build_api_graph(four_calls(), kBase);
    // root, users, user1, info, user2, tags
    EXPECT_EQ(g.node_count(), 6u);
    auto info = g.find_path({"users", "user1", "info"});
    ASSERT_TRUE(info);
    EXPECT_EQ(g.find_path({"users", "user2", "info"}), info);
    EXPECT_EQ(g.parents(*info).size(), 2u);
    EXPECT_TRUE(g.node(*info).endpoint);
    EXPECT_EQ(g.endpoint_calls(*info).size(), 2u);
    EXPECT_EQ(g.node(*info).aliases, (std::vector<std::string>{"/users/user2/info"}));
    EXPECT_EQ(rendered_complete_paths(g),
              (std::set<std::string>{"/users/user1/info", "/users/user2/info", "/users/user2", "/tags"}));
}

TEST(BuildGraph, EmptyCallList) {
    auto g = build_api_graph({}, kBase);
    EXPECT_EQ(g.node_count(), 1u);
    EXPECT_TRUE(complete_paths(g).empty());
}

TEST(BuildGraph, RepeatedUriKeepsStructure) {
    auto call = make_call(HttpMethod::Get, kBase + "/tags", 200, "[]");
    auto once = build_api_graph({call}, kBase);
    auto twice = build_api_graph({call, call}, kBase);
    EXPECT_EQ(once.node_count(), twice.node_count());
    EXPECT_EQ(once.edges(), twice.edges());
    EXPECT_EQ(twice.endpoint_calls(*twice.find_path({"tags"})).size(), 2u);
}

TEST(BuildGraph, DifferentResponsesDoNotJoin) {
    auto g = build_api_graph({make_call(HttpMethod::Get, kBase + "/a/x/c", 200, R"({"id":1})"),
                              make_call(HttpMethod::Get, kBase + "/a/y/c", 200, R"({"other":1})")},
                             kBase);
    EXPECT_NE(g.find_path({"a", "x", "c"}), g.find_path({"a", "y", "c"}));
    EXPECT_TRUE(join_nodes(g).empty());
}

TEST(BuildGraph, ExtendsExistingInPlace) {
    auto calls = four_calls();
    ApiGraph g = build_api_graph({calls[0], calls[1]}, kBase);
    build_api_graph({calls[2], calls[3]}, g);
    EXPECT_EQ(g.edges(), build_api_graph(calls, kBase).edges());
}

TEST(AreEqual, Rules) {
    similarity::Payload l1{R"({"id":1,"name":"user1","role":"user"})", "application/json"};
    similarity::Payload l2{R"({"id":2,"name":"user2","role":"user"})", "application/json"};
    PathSegment a{"info", 2, "/users/user1", true, l1, {}, {}};
    PathSegment b{"info", 2, "/users/user2", true, l2, {}, {}};
    EXPECT_TRUE(are_equal(a, b));
    EXPECT_TRUE(are_equal(b, a));
    EXPECT_FALSE(are_equal(PathSegment{"users", 0, "", false, {}, {}, {}}, PathSegment{"tags", 0, "", false, {}, {}, {}}));
    PathSegment na{"info", 2, "/users/user1", false, {}, {}, {}};
    PathSegment nb{"info", 2, "/users/user2", false, {}, {}, {}};
    EXPECT_FALSE(are_equal(na, nb));
    EXPECT_TRUE(are_equal(na, PathSegment{"info", 2, "/users/user1", false, {}, {}, {}}));
    EXPECT_FALSE(are_equal(a, PathSegment{"info", 1, "/users/user1", true, l1, {}, {}}));
}

TEST(JoinNodes, Examples) {
    auto g = build_api_graph(four_calls(), kBase);
    EXPECT_EQ(names(g, join_nodes(g)), (std::vector<std::string>{"info"}));

    auto tree = build_api_graph({make_call(HttpMethod::Get, kBase + "/a/b"), make_call(HttpMethod::Get, kBase + "/c")}, kBase);
    EXPECT_TRUE(join_nodes(tree).empty());

    auto ac = build_api_graph({make_call(HttpMethod::Get, kBase + "/a/x/c", 200, R"({"k":1})"),
                               make_call(HttpMethod::Get, kBase + "/a/y/c", 200, R"({"k":2})")},
                              kBase);
    auto joins = join_nodes(ac);
    ASSERT_EQ(joins.size(), 1u);
    EXPECT_EQ(ac.node(joins[0]).name, "c");
    EXPECT_EQ(ac.parents(joins[0]).size(), 2u);
}

TEST(IntermediateNodes, Examples) {
    auto calls = four_calls();
    auto g = build_api_graph(calls, kBase);
    EXPECT_EQ(names(g, intermediate_nodes(g)), (std::vector<std::string>{"users", "user1"}));

    auto tags = build_api_graph({calls[3]}, kBase);
    EXPECT_TRUE(intermediate_nodes(tags).empty());

    auto probe = make_call(HttpMethod::Get, kBase + "/users", 200, R"(["user1","user2"])");
    probe.origin = Origin::Probe;
    build_api_graph({probe}, g);
    EXPECT_EQ(names(g, intermediate_nodes(g)), (std::vector<std::string>{"user1"}));
}

TEST(CompletePaths, CountEqualsDistinctUriShapes) {
    // Every subset of a small URI pool: the number of complete paths equals the
    // number of distinct URIs inserted (responses differ per URI so nothing joins).
    const std::vector<std::string> pool = {"/a", "/a/b", "/a/b/c", "/d/b", "/d/e/f", "/a/e"};
    for (unsigned mask = 1; mask < (1u << pool.size()); ++mask) {
        std::vector<ApiCall> calls;
        std::set<std::string> expected;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (mask & (1u << i)) {
                calls.push_back(make_call(HttpMethod::Get, kBase + pool[i], 200, "{\"k" + std::to_string(i) + "\":1}"));
                expected.insert(pool[i]);
            }
        }
        auto g = build_api_graph(calls, kBase);
        EXPECT_EQ(complete_paths(g).size(), expected.size()) << mask;
        EXPECT_EQ(rendered_complete_paths(g), expected) << mask;
    }
}

TEST(Graph, DotExportMentionsEveryNode) {
    auto g = build_api_graph(four_calls(), kBase);
    auto dot = to_dot(g);
    EXPECT_NE(dot.find("digraph"), std::string::npos);
    for (const auto* n : {"users", "user1", "user2", "info", "tags"}) EXPECT_NE(dot.find(n), std::string::npos) << n;
}

TEST(Graph, AreEqualTransitiveOnCorpus) {
    auto seq = support::running_example(kBase);
    auto g = build_api_graph(seq.calls, kBase);
    for (NodeId a = 1; a < g.node_count(); ++a) {
        for (NodeId b = 1; b < g.node_count(); ++b) {
            EXPECT_EQ(are_equal(g.node(a), g.node(b)), are_equal(g.node(b), g.node(a)));
            for (NodeId c = 1; c < g.node_count(); ++c) {
                if (are_equal(g.node(a), g.node(b)) && are_equal(g.node(b), g.node(c))) {
                    EXPECT_TRUE(are_equal(g.node(a), g.node(c)));
                }
            }
        }
    }
    // No two distinct nodes are AreEqual.
    for (NodeId a = 1; a < g.node_count(); ++a) {
        for (NodeId b = a + 1; b < g.node_count(); ++b) EXPECT_FALSE(are_equal(g.node(a), g.node(b)));
    }
}

TEST(BuildGraph, SameParentChildWinsOverJoin) {
    std::vector<ApiCall> calls{make_call(HttpMethod::Get, kBase + "/t/4/x", 200, R"({"a":1})"),
                               make_call(HttpMethod::Get, kBase + "/t/1/x/9", 200, R"({"b":1})"),
                               make_call(HttpMethod::Get, kBase + "/t/1/x", 200, R"({"a":2})")};
    auto g = build_api_graph(calls, kBase);
    auto x1 = g.find_path({"t", "1", "x"});
    auto x4 = g.find_path({"t", "4", "x"});
    ASSERT_TRUE(x1 && x4);
    EXPECT_NE(*x1, *x4);
    EXPECT_TRUE(g.node(*x1).endpoint);
    EXPECT_EQ(g.parents(*x1), std::vector<NodeId>{*g.find_path({"t", "1"})});
    EXPECT_EQ(g.parents(*x4), std::vector<NodeId>{*g.find_path({"t", "4"})});
    EXPECT_TRUE(g.find_path({"t", "1", "x", "9"}).has_value());
}
