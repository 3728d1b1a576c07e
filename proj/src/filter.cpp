#include "carver/filter.hpp"

#include <fnmatch.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

namespace carver::filter {

namespace {

bool is_empty_body(const HttpResponse& r) { return !r.body || r.body->empty(); }

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
    std::vector<std::string> out;
    if (auto it = j.find(key); it != j.end()) {
        for (const auto& v : *it) out.push_back(v.get<std::string>());
    }
    return out;
}

std::vector<std::string> string_list(const toml::table& t, const char* key) {
    std::vector<std::string> out;
    if (const auto* arr = t[key].as_array()) {
        for (const auto& v : *arr) {
            if (auto s = v.value<std::string>()) out.push_back(*s);
            else throw Error(std::string("config key ") + key + " must hold strings");
        }
    }
    return out;
}

FilterConfig from_lists(const std::vector<std::string>& enabled, bool has_enabled,
                        const std::vector<std::string>& mimes, const std::vector<std::string>& deny) {
    FilterConfig cfg;
    if (has_enabled) {
        cfg.enabled_filters.clear();
        for (const auto& e : enabled) cfg.enabled_filters.push_back(parse_filter_kind(e));
    }
    for (const auto& m : mimes) cfg.extra_mime_allow.insert(canonical_mime(m));
    cfg.url_deny_patterns = deny;
    return cfg;
}

}  // namespace

std::string_view to_string(FilterKind k) {
    switch (k) {
        case FilterKind::Operation: return "operation";
        case FilterKind::Status: return "status";
        case FilterKind::Mime: return "mime";
    }
    return "operation";
}

FilterKind parse_filter_kind(std::string_view s) {
    if (iequals(s, "operation")) return FilterKind::Operation;
    if (iequals(s, "status")) return FilterKind::Status;
    if (iequals(s, "mime")) return FilterKind::Mime;
    throw Error("unknown filter: " + std::string(s));
}

std::size_t FilterReport::dropped_total() const {
    return std::accumulate(dropped_by_filter.begin(), dropped_by_filter.end(), std::size_t{0},
                           [](std::size_t acc, const auto& kv) { return acc + kv.second; });
}

Verdict operation_filter(const ApiCall& call) {
    auto m = call.request.method;
    return m == HttpMethod::Trace || m == HttpMethod::Connect ? Verdict::Drop : Verdict::Keep;
}

Verdict status_filter(const ApiCall& call) {
    int s = call.response.status;
    return s >= 400 && s <= 599 ? Verdict::Drop : Verdict::Keep;
}

Verdict mime_filter(const ApiCall& call, const FilterConfig& cfg) {
    if (is_empty_body(call.response)) {
        return is_mutating(call.request.method) ? Verdict::Keep : Verdict::Drop;
    }
    if (!call.response.body_mime) return Verdict::Drop;
    auto mime = canonical_mime(*call.response.body_mime);
    if (is_json_mime(mime) || is_xml_mime(mime) || cfg.extra_mime_allow.contains(mime)) return Verdict::Keep;
    return Verdict::Drop;
}

PipelineResult run_pipeline(const ApiSequence& seq, const FilterConfig& cfg) {
    PipelineResult out;
    out.sequence.base_url = seq.base_url;
    out.report.recorded_count = seq.calls.size();
    for (const auto& k : cfg.enabled_filters) out.report.dropped_by_filter[std::string(to_string(k))] = 0;
    if (!cfg.url_deny_patterns.empty()) out.report.dropped_by_filter["url"] = 0;

    for (const auto& call : seq.calls) {
        bool rescued = false;
        for (const auto& [name, pred] : cfg.keep_predicates) {
            if (pred(call)) {
                rescued = true;
                break;
            }
        }
        std::string dropped_by;
        if (!rescued) {
            for (auto kind : cfg.enabled_filters) {
                Verdict v = kind == FilterKind::Operation ? operation_filter(call)
                            : kind == FilterKind::Status  ? status_filter(call)
                                                          : mime_filter(call, cfg);
                if (v == Verdict::Drop) {
                    dropped_by = to_string(kind);
                    break;
                }
            }
            if (dropped_by.empty()) {
                for (const auto& pattern : cfg.url_deny_patterns) {
                    if (fnmatch(pattern.c_str(), call.request.url.c_str(), 0) == 0) {
                        dropped_by = "url";
                        break;
                    }
                }
            }
        }
        if (dropped_by.empty()) {
            out.sequence.calls.push_back(call);
        } else {
            ++out.report.dropped_by_filter[dropped_by];
        }
    }
    out.report.kept_count = out.sequence.calls.size();
    return out;
}

FilterConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    if (to_lower(path.extension().string()) == ".toml") {
        toml::table root;
        try {
            root = toml::parse(text);
        } catch (const toml::parse_error& e) {
            throw Error("invalid TOML config: " + std::string(e.description()));
        }
        const toml::table* t = root["filter"].as_table();
        if (!t) t = &root;
        return from_lists(string_list(*t, "enabled_filters"), t->contains("enabled_filters"),
                          string_list(*t, "extra_mime_allow"), string_list(*t, "url_deny_patterns"));
    }
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid JSON config: ") + e.what());
    }
    const nlohmann::json& j = root.contains("filter") ? root["filter"] : root;
    return from_lists(string_list(j, "enabled_filters"), j.contains("enabled_filters"),
                      string_list(j, "extra_mime_allow"), string_list(j, "url_deny_patterns"));
}

}  // namespace carver::filter
