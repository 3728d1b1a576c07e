#pragma once

// Path and operation precision/recall of a generated OpenAPI document against a
// ground-truth document.

#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carver/model.hpp"
#include "carver/specgen.hpp"

namespace carver::evaluate {

struct MatchOptions {
    bool loose = false;
    // Operations with these methods are left out of the starred variant.
    std::set<HttpMethod> ignore_methods{HttpMethod::Options, HttpMethod::Head};
};

// Equal lengths; parameter ~ parameter, literal ~ equal literal; a parameter
// against a literal only when loose.
bool match_paths(const specgen::UriTemplate& gen, const specgen::UriTemplate& gt, bool loose = false);

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double duplication = 1.0;
    std::vector<std::string> tp;  // generated items that matched
    std::vector<std::string> fp;
    std::vector<std::string> fn;  // ground-truth items nobody matched
};

struct SpecMetrics {
    PrfScore paths;
    PrfScore operations;
    PrfScore operations_star;  // ignore-list applied

    nlohmann::ordered_json to_json() const;
};

double f1_of(double precision, double recall);

SpecMetrics score(const specgen::SpecDocument& gen, const specgen::SpecDocument& gt, const MatchOptions& opts = {});

struct Aggregate {
    SpecMetrics micro;
    // Per-document averages of precision, recall and F1 (lists left empty).
    SpecMetrics macro;
};

// Micro sums the item counts over all pairs; macro averages per-pair values.
Aggregate aggregate(const std::vector<std::pair<specgen::SpecDocument, specgen::SpecDocument>>& pairs,
                    const MatchOptions& opts = {});

struct Inconsistency {
    std::string item;  // "GET /path" or "/path"
    std::string kind;  // "implemented-but-undocumented"
};

struct DiffReport {
    std::vector<std::string> false_positives;
    std::vector<std::string> false_negatives;
    std::vector<Inconsistency> inconsistencies;

    nlohmann::ordered_json to_json() const;
    std::string to_text() const;
};

// Generated operations unmatched in gt whose recorded responses include a 2xx
// are flagged implemented-but-undocumented.
DiffReport diff_report(const specgen::SpecDocument& gen, const specgen::SpecDocument& gt,
                       const MatchOptions& opts = {});

}  // namespace carver::evaluate
