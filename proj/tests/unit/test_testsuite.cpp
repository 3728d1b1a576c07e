#include <gtest/gtest.h>

#include <json.hpp>

#include "carver/fixture.hpp"
#include "carver/testsuite.hpp"
#include "oracle.hpp"

using namespace carver;
using namespace carver::testsuite;
using support::make_call;
using nlohmann::json;

namespace {

const std::string kBase = "http://h/api";

// Wraps another transport and keeps what was sent.
class Spy : public Transport {
public:
    explicit Spy(Transport& inner) : inner_(inner) {}
    TransportResult send(const HttpRequest& r) override {
        sent.push_back(r);
        return inner_.send(r);
    }
    std::vector<HttpRequest> sent;

private:
    Transport& inner_;
};

class Canned : public Transport {
public:
    std::vector<HttpResponse> responses;
    std::vector<HttpRequest> sent;
    TransportResult send(const HttpRequest& r) override {
        sent.push_back(r);
        TransportResult out;
        if (sent.size() <= responses.size()) out.response = responses[sent.size() - 1];
        else out.error = "no more responses";
        return out;
    }
};

SysTime at(int seconds) { return SysTime{} + std::chrono::hours(24 * 365 * 50) + std::chrono::seconds(seconds); }

}  // namespace

TEST(EmitSuite, SingleCase) {
    auto suite = emit_suite(support::running_example(kBase));
    ASSERT_EQ(suite.cases.size(), 1u);
    EXPECT_EQ(suite.cases[0].steps.size(), 5u);
    EXPECT_EQ(suite.cases[0].name, "case_000");
    EXPECT_EQ(suite.cases[0].steps[0].path, "/users/user1/info");
    EXPECT_EQ(suite.cases[0].steps[3].method, HttpMethod::Post);
    EXPECT_EQ(suite.base_url, kBase);
}

TEST(EmitSuite, PerCheckpointSplit) {
    auto seq = support::running_example(kBase);
    seq.calls[2].response.headers.emplace_back("Set-Cookie", "session=x");  // checkpoints at 2 and 3
    auto suite = emit_suite(seq, Split::PerCheckpoint);
    ASSERT_EQ(suite.cases.size(), 3u);
    EXPECT_EQ(suite.cases[0].steps.size(), 3u);
    EXPECT_EQ(suite.cases[1].steps.size(), 1u);
    EXPECT_EQ(suite.cases[2].steps.size(), 1u);
    EXPECT_EQ(suite.cases[2].name, "case_002");
    EXPECT_EQ(suite.step_count(), 5u);
}

TEST(EmitSuite, CheckpointAtEndAddsNoEmptyCase) {
    ApiSequence seq;
    seq.base_url = kBase;
    seq.calls = {make_call(HttpMethod::Get, kBase + "/a"), make_call(HttpMethod::Post, kBase + "/b")};
    EXPECT_EQ(emit_suite(seq, Split::PerCheckpoint).cases.size(), 1u);
}

TEST(EmitSuite, EmptySequence) {
    ApiSequence seq;
    seq.base_url = kBase;
    auto suite = emit_suite(seq);
    EXPECT_TRUE(suite.cases.empty());
    auto j = to_json(suite);
    EXPECT_EQ(j["version"], 1);
    EXPECT_TRUE(j["cases"].is_array());
}

TEST(EmitSuite, StepFields) {
    ApiSequence seq;
    seq.base_url = kBase;
    auto c = make_call(HttpMethod::Post, kBase + "/articles?draft=1", 302);
    c.request.headers = {{"Cookie", "session=abc; theme=dark"}, {"Authorization", "Bearer t"}};
    c.request.body = "{\"title\":\"x\"}";
    c.origin = Origin::Probe;
    seq.calls = {c};
    const auto suite = emit_suite(seq);
    const auto& s = suite.cases[0].steps[0];
    EXPECT_EQ(s.path, "/articles");
    EXPECT_EQ(s.query, "draft=1");
    EXPECT_EQ(s.headers[0].second, "session={{cookie:session}}; theme={{cookie:theme}}");
    EXPECT_EQ(s.headers[1].second, "Bearer t");
    EXPECT_EQ(s.expect, ExpectClass::Redirect);
    EXPECT_EQ(s.recorded_status, 302);
    EXPECT_EQ(s.origin, Origin::Probe);
    auto j = to_json(emit_suite(seq));
    const auto& sj = j["cases"][0]["steps"][0];
    EXPECT_EQ(sj["body_b64"], base64_encode("{\"title\":\"x\"}"));
    EXPECT_EQ(sj["expect"], "3xx");
    EXPECT_EQ(sj["origin"], "probe");
    std::vector<std::string> keys;
    for (auto it = sj.begin(); it != sj.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"method", "path", "query", "headers", "body_b64", "expect", "origin",
                                              "recorded_status"}));
}

TEST(SuiteFile, RoundTrip) {
    auto seq = support::scheduling_example(kBase);
    for (bool responses : {false, true}) {
        auto suite = emit_suite(seq, Split::PerCheckpoint, responses);
        EXPECT_EQ(suite_from_json(json::parse(to_json(suite).dump())), suite);
        support::TempDir dir;
        write_suite(suite, dir / "s.json");
        EXPECT_EQ(read_suite(dir / "s.json"), suite);
    }
}

TEST(SuiteFile, SequenceRoundTrip) {
    auto seq = support::running_example(kBase);
    auto back = to_sequence(emit_suite(seq, Split::Single, true));
    ASSERT_EQ(back.calls.size(), seq.calls.size());
    for (std::size_t i = 0; i < seq.calls.size(); ++i) {
        EXPECT_EQ(back.calls[i].request.url, seq.calls[i].request.url);
        EXPECT_EQ(back.calls[i].request.method, seq.calls[i].request.method);
        EXPECT_EQ(back.calls[i].response, seq.calls[i].response);
    }
}

TEST(SuiteFile, Errors) {
    EXPECT_THROW(suite_from_json(json{{"version", 2}, {"base_url", ""}, {"cases", json::array()}}), Error);
    json bad = {{"version", 1},
                {"base_url", kBase},
                {"cases", {{{"name", "c"}, {"steps", {{{"method", "GET"}, {"path", "/"}, {"expect", "2xx"}},
                                                      {{"method", "BREW"}, {"path", "/"}, {"expect", "2xx"}}}}}}}};
    try {
        suite_from_json(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.entry(), 1u);
    }
}

TEST(Expect, Classes) {
    EXPECT_EQ(expect_for_status(204), ExpectClass::Success);
    EXPECT_EQ(expect_for_status(301), ExpectClass::Redirect);
    EXPECT_EQ(expect_for_status(101), ExpectClass::Any);
    EXPECT_TRUE(satisfies(ExpectClass::Success, 201));
    EXPECT_FALSE(satisfies(ExpectClass::Success, 500));
    EXPECT_FALSE(satisfies(ExpectClass::Redirect, 200));
    EXPECT_TRUE(satisfies(ExpectClass::Any, 500));
}

TEST(CookieJar, ExpirySemantics) {
    CookieJar jar;
    jar.update({{"Set-Cookie", "a=1; Max-Age=10"}, {"Set-Cookie", "b=2"}, {"Set-Cookie", "c=3; Expires=Wed, 21 Oct 2015 07:28:00 GMT"}},
               at(0));
    EXPECT_EQ(jar.get("a", at(5)), "1");
    EXPECT_FALSE(jar.get("a", at(10)));
    EXPECT_EQ(jar.get("b", at(1000000)), "2");
    EXPECT_FALSE(jar.get("c", at(0)));
    // Max-Age wins over Expires.
    jar.update({{"Set-Cookie", "d=4; Expires=Wed, 21 Oct 2015 07:28:00 GMT; Max-Age=60"}}, at(0));
    EXPECT_EQ(jar.get("d", at(30)), "4");
    jar.update({{"Set-Cookie", "b=gone; Max-Age=0"}}, at(1));
    EXPECT_FALSE(jar.get("b", at(1)));
    EXPECT_EQ(jar.live(at(5)).size(), 2u);
}

TEST(Executor, PlaceholdersAndMonotonicity) {
    Canned t;
    HttpResponse login;
    login.headers.emplace_back("Set-Cookie", "session=abc; Max-Age=100");
    HttpResponse expire;
    expire.headers.emplace_back("Set-Cookie", "session=; Max-Age=0");
    t.responses = {HttpResponse{}, login, HttpResponse{}, expire, HttpResponse{}};
    int now = 0;
    Executor exec(t, "http://live/api", kBase, [&] { return at(now); });

    HttpRequest with_cookie;
    with_cookie.url = kBase + "/me";
    with_cookie.headers = {{"Cookie", "session={{cookie:session}}"}};

    // Before any Set-Cookie: unresolved, nothing sent.
    auto first = exec.execute(with_cookie);
    EXPECT_FALSE(first.diagnostic.empty());
    EXPECT_TRUE(t.sent.empty());

    HttpRequest plain;
    plain.url = kBase + "/login";
    exec.execute(plain);  // consumes response 0 (no cookie)
    exec.execute(plain);  // response 1 sets the cookie
    auto second = exec.execute(with_cookie);
    EXPECT_TRUE(second.diagnostic.empty());
    EXPECT_EQ(t.sent.back().url, "http://live/api/me");
    EXPECT_EQ(find_header(t.sent.back().headers, "Cookie"), "session=abc");

    exec.execute(plain);  // response 3 expires it
    auto third = exec.execute(with_cookie);
    EXPECT_FALSE(third.diagnostic.empty());

    now = 0;
    EXPECT_EQ(exec.rebase("http://elsewhere/x?y=1"), "http://live/api/x?y=1");
}

TEST(Executor, AttachCookies) {
    Canned t;
    HttpResponse login;
    login.headers.emplace_back("Set-Cookie", "session=abc");
    t.responses = {login, HttpResponse{}};
    Executor exec(t, kBase, kBase);
    HttpRequest r;
    r.url = kBase + "/x";
    exec.execute(r);
    exec.execute(r, true);
    EXPECT_EQ(find_header(t.sent.back().headers, "Cookie"), "session=abc");
}

TEST(Replay, LoginCookieCarriedToNextStep) {
    fixture::FixtureServer server;
    server.start();
    Suite suite;
    suite.base_url = "http://recorded.example/api";
    Step login;
    login.method = HttpMethod::Post;
    login.path = "/users/login";
    login.headers = {{"Content-Type", "application/json"}};
    login.body = R"({"username":"user1"})";
    Step follow;
    follow.method = HttpMethod::Post;
    follow.path = "/users/user2/follow";
    follow.headers = {{"Cookie", "session={{cookie:session}}"}, {"Content-Type", "application/json"}};
    follow.body = "{}";
    suite.cases.push_back({"case_000", {login, follow}});

    HttpTransport http;
    Spy spy(http);
    auto report = replay(suite, spy, server.base_url());
    EXPECT_EQ(report.passed, 2u);
    EXPECT_EQ(report.total, 2u);
    ASSERT_EQ(spy.sent.size(), 2u);
    EXPECT_EQ(find_header(spy.sent[1].headers, "Cookie"), "session=s1-user1");
    EXPECT_EQ(report.per_step[0].url, server.base_url() + "/users/login");
    server.stop();
}

TEST(Replay, FailuresDoNotStopTheRun) {
    Canned t;
    HttpResponse err;
    err.status = 500;
    t.responses = {err, HttpResponse{}};
    Suite suite;
    suite.base_url = kBase;
    Step a, b, c;
    a.path = "/a";
    b.path = "/b";
    c.path = "/c";
    c.headers = {{"Cookie", "sid={{cookie:sid}}"}};
    suite.cases.push_back({"case_000", {a, b, c}});
    auto report = replay(suite, t, kBase);
    EXPECT_EQ(report.total, 3u);
    EXPECT_EQ(report.passed, 1u);
    EXPECT_EQ(report.failed, 2u);
    EXPECT_FALSE(report.per_step[0].passed);
    EXPECT_EQ(report.per_step[0].status, 500);
    EXPECT_TRUE(report.per_step[1].passed);
    EXPECT_NE(report.per_step[2].diagnostic.find("sid"), std::string::npos);
    EXPECT_EQ(report.to_json()["steps"].size(), 3u);
    EXPECT_NE(report.to_table().find("failed 2"), std::string::npos);
}

TEST(Replay, TransportErrorIsAFailedStep) {
    Canned t;  // no responses: every send fails
    Suite suite;
    suite.base_url = kBase;
    suite.cases.push_back({"case_000", {Step{}, Step{}}});
    auto report = replay(suite, t, kBase);
    EXPECT_EQ(report.failed, 2u);
    EXPECT_EQ(report.per_step[0].status, 0);
}

TEST(Replay, CarvedFixtureSuitePassesAfterReset) {
    fixture::FixtureServer server;
    server.start();
    auto seq = support::live_session(server.base_url());
    auto suite = emit_suite(seq, Split::PerCheckpoint);
    HttpTransport http;
    for (int run = 0; run < 2; ++run) {
        server.reset();
        auto report = replay(suite, http, server.base_url());
        EXPECT_EQ(report.passed, suite.step_count());
        EXPECT_EQ(report.failed, 0u);
    }
    server.stop();
}
