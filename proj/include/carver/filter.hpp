#pragma once

// Carving filters: drop recorded calls that are irrelevant for API-level tests.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carver/model.hpp"

namespace carver::filter {

enum class FilterKind { Operation, Status, Mime };

std::string_view to_string(FilterKind k);
// Accepts "operation", "status", "mime" in any case. Throws Error otherwise.
FilterKind parse_filter_kind(std::string_view s);

enum class Verdict { Keep, Drop };

using Predicate = std::function<bool(const ApiCall&)>;

struct FilterConfig {
    std::vector<FilterKind> enabled_filters{FilterKind::Operation, FilterKind::Status, FilterKind::Mime};
    std::set<std::string> extra_mime_allow;
    // fnmatch(3) globs matched against the full request URL; a match drops the call.
    std::vector<std::string> url_deny_patterns;
    // A call any of these accepts is kept even when a filter would drop it.
    std::vector<std::pair<std::string, Predicate>> keep_predicates;
};

// Reads a TOML (.toml) or JSON file; keys mirror FilterConfig fields, either
// top-level or under a [filter] table. Throws Error.
FilterConfig load_config(const std::filesystem::path& path);

struct FilterReport {
    std::size_t recorded_count = 0;
    std::size_t kept_count = 0;
    std::map<std::string, std::size_t> dropped_by_filter;

    std::size_t dropped_total() const;
};

Verdict operation_filter(const ApiCall& call);
Verdict status_filter(const ApiCall& call);
Verdict mime_filter(const ApiCall& call, const FilterConfig& cfg);

struct PipelineResult {
    ApiSequence sequence;
    FilterReport report;
};

// Drops are attributed to the first filter that fires; "url" counts deny-pattern drops.
PipelineResult run_pipeline(const ApiSequence& seq, const FilterConfig& cfg = {});

}  // namespace carver::filter
