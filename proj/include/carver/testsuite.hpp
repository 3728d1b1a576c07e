#pragma once

// Carved API test suites: the on-disk suite format, a cookie-aware sequential
// executor, and replay with a run report.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carver/model.hpp"
#include "carver/timeutil.hpp"

namespace carver::testsuite {

enum class ExpectClass { Success, Redirect, Any };  // "2xx", "3xx", "any"

std::string_view to_string(ExpectClass e);
ExpectClass parse_expect(std::string_view s);
ExpectClass expect_for_status(int status);
bool satisfies(ExpectClass e, int status);

struct Step {
    HttpMethod method = HttpMethod::Get;
    std::string path = "/";  // relative to the suite base_url
    std::optional<std::string> query;
    Headers headers;  // Cookie values are "{{cookie:<name>}}" placeholders
    std::optional<std::string> body;
    ExpectClass expect = ExpectClass::Success;
    int recorded_status = 200;
    Origin origin = Origin::Recorded;
    std::optional<HttpResponse> response;  // recorded response, kept for inference

    bool operator==(const Step&) const = default;
};

struct TestCase {
    std::string name;
    std::vector<Step> steps;

    bool operator==(const TestCase&) const = default;
};

struct Suite {
    int version = 1;
    std::string base_url;
    std::vector<TestCase> cases;

    bool operator==(const Suite&) const = default;
    std::size_t step_count() const;
};

enum class Split { Single, PerCheckpoint };

Suite emit_suite(const ApiSequence& seq, Split split = Split::Single, bool include_responses = false);

nlohmann::ordered_json to_json(const Suite& suite);
// Throws ParseError (entry = step ordinal) or Error.
Suite suite_from_json(const nlohmann::json& j);
void write_suite(const Suite& suite, const std::filesystem::path& path);
Suite read_suite(const std::filesystem::path& path);

// Steps flattened back into one sequence (placeholders kept verbatim).
ApiSequence to_sequence(const Suite& suite);

// "name=value; name2=value2" with every value replaced by its placeholder.
std::string cookie_placeholders(std::string_view cookie_header);

class CookieJar {
public:
    // Applies every Set-Cookie header; Max-Age wins over Expires; a cookie in
    // the past (or Max-Age <= 0) is removed.
    void update(const Headers& response_headers, SysTime now);
    std::optional<std::string> get(const std::string& name, SysTime now) const;
    std::map<std::string, std::string> live(SysTime now) const;
    void clear() { cookies_.clear(); }

private:
    struct Cookie {
        std::string value;
        std::optional<SysTime> expires;
    };
    std::map<std::string, Cookie> cookies_;
};

struct TransportResult {
    std::optional<HttpResponse> response;
    std::string error;  // set when no response was received
    double latency_ms = 0.0;
};

class Transport {
public:
    virtual ~Transport() = default;
    // request.url is absolute.
    virtual TransportResult send(const HttpRequest& request) = 0;
};

// Plain HTTP/1.1 client, one connection per request.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::chrono::milliseconds timeout = std::chrono::seconds(5));
    TransportResult send(const HttpRequest& request) override;

private:
    std::chrono::milliseconds timeout_;
};

using Clock = std::function<SysTime()>;

// Sends requests recorded against `recorded_base` to `target_base`, keeping a
// cookie store across calls.
class Executor {
public:
    Executor(Transport& transport, std::string target_base, std::string recorded_base,
             Clock clock = [] { return std::chrono::system_clock::now(); });

    struct Outcome {
        HttpRequest sent;
        TransportResult result;
        std::string diagnostic;  // unresolved placeholder etc.; request not sent
        bool delivered() const { return result.response.has_value(); }
    };

    // Cookie header pairs are refreshed from the store; with attach_cookies,
    // live cookies missing from the request are added as well.
    Outcome execute(const HttpRequest& request, bool attach_cookies = false);

    // POST to target_base + path (or to path itself when absolute); used to
    // reset disposable servers.
    bool reset(const std::string& path);

    void clear_cookies() { jar_.clear(); }
    const CookieJar& cookies() const { return jar_; }
    std::string rebase(const std::string& url) const;

private:
    Transport& transport_;
    std::string target_base_;
    std::string recorded_base_;
    Clock clock_;
    CookieJar jar_;
};

struct StepResult {
    std::string name;
    HttpMethod method = HttpMethod::Get;
    std::string url;
    int status = 0;  // 0 when nothing was received
    double latency_ms = 0.0;
    bool passed = false;
    std::string diagnostic;
};

struct RunReport {
    std::size_t total = 0;
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::vector<StepResult> per_step;
    double wall_time_ms = 0.0;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

RunReport replay(const Suite& suite, Transport& transport, const std::string& target_base,
                 Clock clock = [] { return std::chrono::system_clock::now(); });

}  // namespace carver::testsuite
