#include "carver/testsuite.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>

#include "carver/probe.hpp"

namespace carver::testsuite {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kPlaceholderPrefix = "{{cookie:";

struct CookiePair {
    std::string name;
    std::string value;
};

std::vector<CookiePair> split_cookie_header(std::string_view header) {
    std::vector<CookiePair> out;
    std::size_t pos = 0;
    while (pos < header.size()) {
        auto semi = header.find(';', pos);
        if (semi == std::string_view::npos) semi = header.size();
        auto part = trim(header.substr(pos, semi - pos));
        if (!part.empty()) {
            auto eq = part.find('=');
            if (eq == std::string::npos) {
                out.push_back({part, ""});
            } else {
                out.push_back({trim(part.substr(0, eq)), trim(part.substr(eq + 1))});
            }
        }
        pos = semi + 1;
    }
    return out;
}

std::optional<std::string> placeholder_name(std::string_view value) {
    if (value.starts_with(kPlaceholderPrefix) && value.ends_with("}}")) {
        return std::string(value.substr(kPlaceholderPrefix.size(),
                                        value.size() - kPlaceholderPrefix.size() - 2));
    }
    return std::nullopt;
}

bool is_hop_or_framing(std::string_view name) {
    static const char* kSkip[] = {"host",       "content-length", "connection", "keep-alive",
                                  "transfer-encoding", "te",       "trailer",    "upgrade",
                                  "proxy-connection",  "accept-encoding"};
    for (const char* s : kSkip) {
        if (iequals(name, s)) return true;
    }
    return false;
}

ordered_json headers_json(const Headers& h) {
    ordered_json arr = ordered_json::array();
    for (const auto& [k, v] : h) arr.push_back(ordered_json::array({k, v}));
    return arr;
}

Headers headers_from(const json& j, std::size_t entry) {
    Headers out;
    if (j.is_null()) return out;
    if (!j.is_array()) throw ParseError("headers must be an array", entry);
    for (const auto& h : j) {
        if (!h.is_array() || h.size() != 2) throw ParseError("malformed header pair", entry);
        out.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
    }
    return out;
}

std::string step_name(const TestCase& tc, std::size_t i, const Step& s) {
    return tc.name + "/" + std::to_string(i) + " " + std::string(carver::to_string(s.method)) + " " + s.path;
}

}  // namespace

std::string_view to_string(ExpectClass e) {
    switch (e) {
        case ExpectClass::Success: return "2xx";
        case ExpectClass::Redirect: return "3xx";
        case ExpectClass::Any: return "any";
    }
    return "any";
}

ExpectClass parse_expect(std::string_view s) {
    if (s == "2xx") return ExpectClass::Success;
    if (s == "3xx") return ExpectClass::Redirect;
    if (s == "any") return ExpectClass::Any;
    throw Error("unknown expectation: " + std::string(s));
}

ExpectClass expect_for_status(int status) {
    if (status >= 200 && status < 300) return ExpectClass::Success;
    if (status >= 300 && status < 400) return ExpectClass::Redirect;
    return ExpectClass::Any;
}

bool satisfies(ExpectClass e, int status) {
    switch (e) {
        case ExpectClass::Success: return status >= 200 && status < 300;
        case ExpectClass::Redirect: return status >= 300 && status < 400;
        case ExpectClass::Any: return status > 0;
    }
    return false;
}

std::size_t Suite::step_count() const {
    std::size_t n = 0;
    for (const auto& c : cases) n += c.steps.size();
    return n;
}

std::string cookie_placeholders(std::string_view cookie_header) {
    std::string out;
    for (const auto& p : split_cookie_header(cookie_header)) {
        if (!out.empty()) out += "; ";
        out += p.name + "=" + std::string(kPlaceholderPrefix) + p.name + "}}";
    }
    return out;
}

Suite emit_suite(const ApiSequence& seq, Split split, bool include_responses) {
    Suite suite;
    suite.base_url = seq.base_url;
    std::set<std::size_t> split_after;
    if (split == Split::PerCheckpoint) {
        for (const auto& cp : probe::find_checkpoints(seq)) split_after.insert(cp.index);
    }
    auto new_case = [&] {
        std::ostringstream name;
        name << "case_" << std::setw(3) << std::setfill('0') << suite.cases.size();
        suite.cases.push_back(TestCase{name.str(), {}});
    };
    for (std::size_t i = 0; i < seq.calls.size(); ++i) {
        if (suite.cases.empty()) new_case();
        const auto& call = seq.calls[i];
        Step step;
        step.method = call.request.method;
        step.path = relative_path(call.request.url, seq.base_url);
        step.query = parse_url(call.request.url).query;
        for (const auto& [k, v] : call.request.headers) {
            if (iequals(k, "Cookie")) {
                step.headers.emplace_back(k, cookie_placeholders(v));
            } else {
                step.headers.emplace_back(k, v);
            }
        }
        step.body = call.request.body;
        step.recorded_status = call.response.status;
        step.expect = expect_for_status(call.response.status);
        step.origin = call.origin;
        if (include_responses) step.response = call.response;
        suite.cases.back().steps.push_back(std::move(step));
        if (split_after.contains(i) && i + 1 < seq.calls.size()) new_case();
    }
    return suite;
}

ordered_json to_json(const Suite& suite) {
    ordered_json root;
    root["version"] = suite.version;
    root["base_url"] = suite.base_url;
    ordered_json cases = ordered_json::array();
    for (const auto& tc : suite.cases) {
        ordered_json steps = ordered_json::array();
        for (const auto& s : tc.steps) {
            ordered_json sj;
            sj["method"] = carver::to_string(s.method);
            sj["path"] = s.path;
            sj["query"] = s.query ? ordered_json(*s.query) : ordered_json(nullptr);
            sj["headers"] = headers_json(s.headers);
            sj["body_b64"] = s.body ? ordered_json(base64_encode(*s.body)) : ordered_json(nullptr);
            sj["expect"] = to_string(s.expect);
            sj["origin"] = carver::to_string(s.origin);
            sj["recorded_status"] = s.recorded_status;
            if (s.response) {
                ordered_json rj;
                rj["status"] = s.response->status;
                rj["headers"] = headers_json(s.response->headers);
                rj["body_b64"] = s.response->body ? ordered_json(base64_encode(*s.response->body)) : ordered_json(nullptr);
                rj["mime"] = s.response->body_mime ? ordered_json(*s.response->body_mime) : ordered_json(nullptr);
                sj["response"] = rj;
            }
            steps.push_back(std::move(sj));
        }
        cases.push_back(ordered_json{{"name", tc.name}, {"steps", steps}});
    }
    root["cases"] = cases;
    return root;
}

Suite suite_from_json(const json& j) {
    Suite suite;
    std::size_t ordinal = 0;
    try {
        suite.version = j.at("version").get<int>();
        if (suite.version != 1) throw Error("unsupported suite version " + std::to_string(suite.version));
        suite.base_url = j.at("base_url").get<std::string>();
        for (const auto& cj : j.at("cases")) {
            TestCase tc;
            tc.name = cj.at("name").get<std::string>();
            for (const auto& sj : cj.at("steps")) {
                Step s;
                auto method = parse_method(sj.at("method").get<std::string>());
                if (!method) throw ParseError("unknown method", ordinal);
                s.method = *method;
                s.path = sj.at("path").get<std::string>();
                if (auto q = sj.find("query"); q != sj.end() && q->is_string()) s.query = q->get<std::string>();
                s.headers = headers_from(sj.value("headers", json()), ordinal);
                if (auto b = sj.find("body_b64"); b != sj.end() && b->is_string()) {
                    s.body = base64_decode(b->get<std::string>());
                }
                s.expect = parse_expect(sj.at("expect").get<std::string>());
                auto origin = parse_origin(sj.value("origin", "recorded"));
                if (!origin) throw ParseError("unknown origin", ordinal);
                s.origin = *origin;
                if (auto rs = sj.find("recorded_status"); rs != sj.end()) {
                    s.recorded_status = rs->get<int>();
                }
                if (auto rj = sj.find("response"); rj != sj.end() && rj->is_object()) {
                    HttpResponse r;
                    r.status = rj->at("status").get<int>();
                    r.headers = headers_from(rj->value("headers", json()), ordinal);
                    if (auto b = rj->find("body_b64"); b != rj->end() && b->is_string()) {
                        r.body = base64_decode(b->get<std::string>());
                    }
                    if (auto m = rj->find("mime"); m != rj->end() && m->is_string()) r.body_mime = m->get<std::string>();
                    s.response = std::move(r);
                }
                tc.steps.push_back(std::move(s));
                ++ordinal;
            }
            suite.cases.push_back(std::move(tc));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed suite: ") + e.what(), ordinal);
    }
    return suite;
}

void write_suite(const Suite& suite, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json(suite).dump(2) << "\n";
    if (!out) throw Error("write failed: " + path.string());
}

Suite read_suite(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid suite JSON: ") + e.what(), 0);
    }
    return suite_from_json(j);
}

ApiSequence to_sequence(const Suite& suite) {
    ApiSequence seq;
    seq.base_url = suite.base_url;
    std::string base = suite.base_url;
    while (base.ends_with('/')) base.pop_back();
    for (const auto& tc : suite.cases) {
        for (const auto& s : tc.steps) {
            ApiCall call;
            call.request.method = s.method;
            call.request.url = base + (s.path == "/" ? std::string{} : s.path);
            if (call.request.url.empty() || call.request.url == base) call.request.url = base + "/";
            if (s.query) call.request.url += "?" + *s.query;
            call.request.headers = s.headers;
            call.request.body = s.body;
            if (s.body) {
                if (auto ct = find_header(s.headers, "Content-Type")) call.request.body_mime = canonical_mime(*ct);
            }
            if (s.response) {
                call.response = *s.response;
            } else {
                call.response.status = s.recorded_status;
            }
            call.origin = s.origin;
            seq.calls.push_back(std::move(call));
        }
    }
    seq.reindex();
    return seq;
}

void CookieJar::update(const Headers& response_headers, SysTime now) {
    for (const auto& set_cookie : find_all_headers(response_headers, "Set-Cookie")) {
        auto parts = split_cookie_header(set_cookie);
        if (parts.empty() || parts.front().name.empty()) continue;
        const auto name = parts.front().name;
        Cookie cookie{parts.front().value, std::nullopt};
        std::optional<long long> max_age;
        std::optional<SysTime> expires;
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (iequals(parts[i].name, "Max-Age")) {
                try {
                    max_age = std::stoll(parts[i].value);
                } catch (const std::exception&) {
                }
            } else if (iequals(parts[i].name, "Expires")) {
                expires = parse_http_date(parts[i].value);
            }
        }
        if (max_age) {
            if (*max_age <= 0) {
                cookies_.erase(name);
                continue;
            }
            cookie.expires = now + std::chrono::seconds(*max_age);
        } else if (expires) {
            if (*expires <= now) {
                cookies_.erase(name);
                continue;
            }
            cookie.expires = expires;
        }
        cookies_[name] = std::move(cookie);
    }
}

std::optional<std::string> CookieJar::get(const std::string& name, SysTime now) const {
    auto it = cookies_.find(name);
    if (it == cookies_.end()) return std::nullopt;
    if (it->second.expires && *it->second.expires <= now) return std::nullopt;
    return it->second.value;
}

std::map<std::string, std::string> CookieJar::live(SysTime now) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, c] : cookies_) {
        if (!c.expires || *c.expires > now) out.emplace(k, c.value);
    }
    return out;
}

HttpTransport::HttpTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

TransportResult HttpTransport::send(const HttpRequest& request) {
    TransportResult out;
    Url url;
    try {
        url = parse_url(request.url);
    } catch (const MalformedUri& e) {
        out.error = e.what();
        return out;
    }
    if (url.scheme != "http") {
        out.error = "unsupported scheme: " + url.scheme;
        return out;
    }
    httplib::Client client(url.origin());
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Request req;
    req.method = std::string(to_string(request.method));
    req.path = url.path + (url.query ? "?" + *url.query : std::string{});
    for (const auto& [k, v] : request.headers) {
        if (!is_hop_or_framing(k)) req.headers.emplace(k, v);
    }
    if (request.body) {
        req.body = *request.body;
        if (!find_header(request.headers, "Content-Type") && request.body_mime) {
            req.headers.emplace("Content-Type", *request.body_mime);
        }
    }
    const auto start = std::chrono::steady_clock::now();
    auto res = client.send(req);
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    HttpResponse r;
    r.status = res->status;
    for (const auto& [k, v] : res->headers) r.headers.emplace_back(k, v);
    if (!res->body.empty()) r.body = res->body;
    if (auto ct = find_header(r.headers, "Content-Type")) r.body_mime = canonical_mime(*ct);
    out.response = std::move(r);
    return out;
}

Executor::Executor(Transport& transport, std::string target_base, std::string recorded_base, Clock clock)
    : transport_(transport),
      target_base_(std::move(target_base)),
      recorded_base_(std::move(recorded_base)),
      clock_(std::move(clock)) {
    while (target_base_.ends_with('/')) target_base_.pop_back();
    while (recorded_base_.ends_with('/')) recorded_base_.pop_back();
}

std::string Executor::rebase(const std::string& url) const {
    if (!recorded_base_.empty() && url.starts_with(recorded_base_)) {
        return target_base_ + url.substr(recorded_base_.size());
    }
    Url u = parse_url(url);
    return target_base_ + u.path + (u.query ? "?" + *u.query : std::string{});
}

Executor::Outcome Executor::execute(const HttpRequest& request, bool attach_cookies) {
    Outcome out;
    out.sent = request;
    out.sent.url = rebase(request.url);
    const auto now = clock_();

    Headers headers;
    std::set<std::string> named;
    for (const auto& [k, v] : request.headers) {
        if (!iequals(k, "Cookie")) {
            headers.emplace_back(k, v);
            continue;
        }
        std::string rebuilt;
        for (const auto& pair : split_cookie_header(v)) {
            std::string value = pair.value;
            if (auto ph = placeholder_name(pair.value)) {
                auto live = jar_.get(*ph, now);
                if (!live) {
                    out.diagnostic = "unresolved cookie placeholder: " + *ph;
                    continue;
                }
                value = *live;
            } else if (auto live = jar_.get(pair.name, now)) {
                value = *live;
            }
            named.insert(pair.name);
            if (!rebuilt.empty()) rebuilt += "; ";
            rebuilt += pair.name + "=" + value;
        }
        if (!rebuilt.empty()) headers.emplace_back("Cookie", rebuilt);
    }
    if (!out.diagnostic.empty()) {
        out.sent.headers = std::move(headers);
        return out;
    }
    if (attach_cookies) {
        std::string extra;
        for (const auto& [name, value] : jar_.live(now)) {
            if (named.contains(name)) continue;
            if (!extra.empty()) extra += "; ";
            extra += name + "=" + value;
        }
        if (!extra.empty()) {
            auto it = std::find_if(headers.begin(), headers.end(), [](const auto& h) { return iequals(h.first, "Cookie"); });
            if (it != headers.end()) {
                it->second += "; " + extra;
            } else {
                headers.emplace_back("Cookie", extra);
            }
        }
    }
    out.sent.headers = std::move(headers);
    out.result = transport_.send(out.sent);
    if (out.result.response) jar_.update(out.result.response->headers, clock_());
    return out;
}

bool Executor::reset(const std::string& path) {
    HttpRequest req;
    req.method = HttpMethod::Post;
    if (path.starts_with("http://") || path.starts_with("https://")) {
        req.url = path;
    } else {
        req.url = target_base_ + (path.starts_with('/') ? path : "/" + path);
    }
    auto res = transport_.send(req);
    return res.response && res.response->status < 400;
}

ordered_json RunReport::to_json() const {
    ordered_json j;
    j["total"] = total;
    j["passed"] = passed;
    j["failed"] = failed;
    j["wall_time_ms"] = wall_time_ms;
    ordered_json steps = ordered_json::array();
    for (const auto& s : per_step) {
        ordered_json sj;
        sj["name"] = s.name;
        sj["method"] = carver::to_string(s.method);
        sj["url"] = s.url;
        sj["status"] = s.status;
        sj["latency_ms"] = s.latency_ms;
        sj["verdict"] = s.passed ? "pass" : "fail";
        if (!s.diagnostic.empty()) sj["diagnostic"] = s.diagnostic;
        steps.push_back(std::move(sj));
    }
    j["steps"] = steps;
    return j;
}

std::string RunReport::to_table() const {
    std::ostringstream out;
    out << std::left << std::setw(6) << "RESULT" << std::setw(8) << "STATUS" << std::setw(10) << "MS"
        << "STEP\n";
    for (const auto& s : per_step) {
        out << std::left << std::setw(6) << (s.passed ? "pass" : "FAIL") << std::setw(8) << s.status
            << std::setw(10) << std::fixed << std::setprecision(1) << s.latency_ms << s.name;
        if (!s.diagnostic.empty()) out << "  (" << s.diagnostic << ")";
        out << "\n";
    }
    out << "total " << total << ", passed " << passed << ", failed " << failed << ", wall time "
        << std::fixed << std::setprecision(1) << wall_time_ms << " ms\n";
    return out.str();
}

RunReport replay(const Suite& suite, Transport& transport, const std::string& target_base, Clock clock) {
    RunReport report;
    Executor exec(transport, target_base, suite.base_url, std::move(clock));
    const auto seq = to_sequence(suite);
    const auto start = std::chrono::steady_clock::now();
    std::size_t k = 0;
    for (const auto& tc : suite.cases) {
        for (std::size_t i = 0; i < tc.steps.size(); ++i, ++k) {
            const auto& step = tc.steps[i];
            auto outcome = exec.execute(seq.calls[k].request);
            StepResult r;
            r.name = step_name(tc, i, step);
            r.method = step.method;
            r.url = outcome.sent.url;
            r.latency_ms = outcome.result.latency_ms;
            if (!outcome.diagnostic.empty()) {
                r.diagnostic = outcome.diagnostic;
            } else if (!outcome.result.response) {
                r.diagnostic = "transport error: " + outcome.result.error;
            } else {
                r.status = outcome.result.response->status;
                r.passed = satisfies(step.expect, r.status);
                if (!r.passed) r.diagnostic = "expected " + std::string(to_string(step.expect));
            }
            (r.passed ? report.passed : report.failed)++;
            report.per_step.push_back(std::move(r));
        }
    }
    report.total = report.passed + report.failed;
    report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace carver::testsuite
