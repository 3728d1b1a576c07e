#include "carver/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "carver/timeutil.hpp"

namespace carver::ingest {

namespace {

using nlohmann::json;

struct TimedCall {
    SysTime ts;
    ApiCall call;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Headers har_headers(const json& arr) {
    Headers out;
    if (!arr.is_array()) return out;
    for (const auto& h : arr) {
        out.emplace_back(h.value("name", ""), h.value("value", ""));
    }
    return out;
}

Headers pair_headers(const json& arr, std::size_t entry) {
    Headers out;
    if (arr.is_null()) return out;
    if (!arr.is_array()) throw ParseError("headers must be an array of [name, value] pairs", entry);
    for (const auto& h : arr) {
        if (!h.is_array() || h.size() != 2 || !h[0].is_string() || !h[1].is_string()) {
            throw ParseError("malformed header pair", entry);
        }
        out.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
    }
    return out;
}

std::optional<std::string> optional_b64(const json& obj, const char* key, std::size_t entry) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string(key) + " must be a string", entry);
    try {
        std::string bytes = base64_decode(it->get<std::string>());
        if (bytes.empty()) return std::nullopt;
        return bytes;
    } catch (const Error&) {
        throw ParseError(std::string(key) + " is not valid base64", entry);
    }
}

std::optional<std::string> mime_of(const Headers& headers, const std::optional<std::string>& declared) {
    if (declared && !declared->empty()) return canonical_mime(*declared);
    if (auto ct = find_header(headers, "Content-Type")) return canonical_mime(*ct);
    return std::nullopt;
}

Recording finish(std::vector<TimedCall> timed, const std::optional<std::string>& base_url) {
    std::stable_sort(timed.begin(), timed.end(),
                     [](const TimedCall& a, const TimedCall& b) { return a.ts < b.ts; });
    std::vector<ApiCall> calls;
    calls.reserve(timed.size());
    for (auto& t : timed) calls.push_back(std::move(t.call));
    if (calls.empty()) throw EmptyRecording();

    Recording rec;
    rec.sequence.base_url = base_url ? *base_url : autodetect_base_url(calls);
    while (rec.sequence.base_url.size() > 1 && rec.sequence.base_url.ends_with('/')) {
        rec.sequence.base_url.pop_back();
    }
    for (auto& c : calls) {
        if (has_base_prefix(c.request.url, rec.sequence.base_url)) {
            rec.sequence.calls.push_back(std::move(c));
        } else {
            ++rec.dropped_external;
        }
    }
    if (rec.sequence.calls.empty()) throw EmptyRecording();
    rec.sequence.reindex();
    return rec;
}

}  // namespace

SourceKind detect_kind(const std::filesystem::path& path) {
    auto ext = to_lower(path.extension().string());
    if (ext == ".jsonl" || ext == ".ndjson") return SourceKind::Jsonl;
    if (ext == ".har") return SourceKind::Har;
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    auto t = trim(first);
    // A HAR document is one object with a top-level "log"; JSONL lines carry "ts".
    if (t.starts_with("{") && t.find("\"ts\"") != std::string::npos) return SourceKind::Jsonl;
    return SourceKind::Har;
}

Recording load(const RecordingSource& source) {
    std::string text = read_file(source.path);
    return source.kind == SourceKind::Har ? parse_har(text, source.base_url)
                                          : parse_jsonl(text, source.base_url);
}

Recording parse_har(std::string_view text, const std::optional<std::string>& base_url) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid HAR JSON: ") + e.what(), 0);
    }
    if (!doc.contains("log") || !doc["log"].contains("entries") || !doc["log"]["entries"].is_array()) {
        throw ParseError("HAR document has no log.entries array", 0);
    }
    std::vector<TimedCall> timed;
    const auto& entries = doc["log"]["entries"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        try {
            auto ts = parse_rfc3339(e.at("startedDateTime").get<std::string>());
            if (!ts) throw ParseError("unparseable startedDateTime", i);
            const auto& req = e.at("request");
            const auto& resp = e.at("response");

            ApiCall call;
            auto method = parse_method(req.at("method").get<std::string>());
            if (!method) throw ParseError("unknown HTTP method", i);
            call.request.method = *method;
            call.request.url = req.at("url").get<std::string>();
            parse_url(call.request.url);
            call.request.headers = har_headers(req.value("headers", json::array()));
            if (auto pd = req.find("postData"); pd != req.end() && pd->is_object()) {
                std::string body = pd->value("text", "");
                if (pd->value("encoding", "") == "base64") body = base64_decode(body);
                if (!body.empty()) call.request.body = std::move(body);
                call.request.body_mime = mime_of(call.request.headers, pd->value("mimeType", ""));
            }

            call.response.status = resp.at("status").get<int>();
            call.response.headers = har_headers(resp.value("headers", json::array()));
            std::string declared;
            if (auto content = resp.find("content"); content != resp.end() && content->is_object()) {
                declared = content->value("mimeType", "");
                std::string body = content->value("text", "");
                if (content->value("encoding", "") == "base64") body = base64_decode(body);
                if (!body.empty()) call.response.body = std::move(body);
            }
            call.response.body_mime = mime_of(call.response.headers, declared);
            timed.push_back({*ts, std::move(call)});
        } catch (const json::exception& ex) {
            throw ParseError(std::string("malformed HAR entry: ") + ex.what(), i);
        } catch (const MalformedUri& ex) {
            throw ParseError(ex.what(), i);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& ex) {
            throw ParseError(ex.what(), i);
        }
    }
    return finish(std::move(timed), base_url);
}

Recording parse_jsonl(std::string_view text, const std::optional<std::string>& base_url) {
    std::vector<TimedCall> timed;
    std::size_t torn = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        const bool terminated = nl != std::string_view::npos;
        auto line = text.substr(pos, terminated ? nl - pos : text.size() - pos);
        pos = terminated ? nl + 1 : text.size();
        const std::size_t entry = line_no++;
        if (trim(line).empty()) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            // A crash mid-append leaves one unterminated final line.
            if (!terminated) {
                ++torn;
                break;
            }
            throw ParseError(std::string("invalid JSON record: ") + e.what(), entry);
        }
        try {
            auto ts = parse_rfc3339(rec.at("ts").get<std::string>());
            if (!ts) throw ParseError("unparseable ts", entry);
            ApiCall call;
            auto method = parse_method(rec.at("method").get<std::string>());
            if (!method) throw ParseError("unknown HTTP method", entry);
            call.request.method = *method;
            call.request.url = rec.at("url").get<std::string>();
            parse_url(call.request.url);
            call.request.headers = pair_headers(rec.value("req_headers", json()), entry);
            call.request.body = optional_b64(rec, "req_body_b64", entry);
            if (call.request.body) call.request.body_mime = mime_of(call.request.headers, std::nullopt);
            call.response.status = rec.at("status").get<int>();
            call.response.headers = pair_headers(rec.value("resp_headers", json()), entry);
            call.response.body = optional_b64(rec, "resp_body_b64", entry);
            std::optional<std::string> declared;
            if (auto m = rec.find("resp_mime"); m != rec.end() && m->is_string()) declared = m->get<std::string>();
            call.response.body_mime = mime_of(call.response.headers, declared);
            timed.push_back({*ts, std::move(call)});
        } catch (const json::exception& ex) {
            throw ParseError(std::string("malformed record: ") + ex.what(), entry);
        } catch (const MalformedUri& ex) {
            throw ParseError(ex.what(), entry);
        }
    }
    auto rec = finish(std::move(timed), base_url);
    rec.torn_lines = torn;
    return rec;
}

std::string autodetect_base_url(const std::vector<ApiCall>& calls) {
    if (calls.empty()) throw EmptyRecording();
    Url first = parse_url(calls.front().request.url);
    if (first.scheme.empty()) throw MixedOrigin();
    std::string prefix = first.path;
    for (const auto& c : calls) {
        Url u = parse_url(c.request.url);
        if (!iequals(u.scheme, first.scheme) || !iequals(u.authority, first.authority)) throw MixedOrigin();
        auto mm = std::mismatch(prefix.begin(), prefix.end(), u.path.begin(), u.path.end());
        prefix.erase(mm.first, prefix.end());
    }
    auto slash = prefix.rfind('/');
    prefix = slash == std::string::npos ? std::string{} : prefix.substr(0, slash);
    return first.origin() + prefix;
}

}  // namespace carver::ingest
