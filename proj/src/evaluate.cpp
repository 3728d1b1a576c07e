#include "carver/evaluate.hpp"

#include <sstream>

namespace carver::evaluate {

namespace {

using nlohmann::ordered_json;
using specgen::SpecDocument;
using specgen::UriTemplate;

struct Item {
    UriTemplate uri;
    std::optional<HttpMethod> method;
    bool has_success = false;

    std::string label() const {
        auto path = uri.render();
        return method ? std::string(to_string(*method)) + " " + path : path;
    }
};

std::vector<Item> path_items(const SpecDocument& doc) {
    std::vector<Item> out;
    for (const auto& [key, item] : doc.path_items) out.push_back({item.uri_template, std::nullopt, false});
    return out;
}

std::vector<Item> operation_items(const SpecDocument& doc, const std::set<HttpMethod>& ignore) {
    std::vector<Item> out;
    for (const auto& [key, item] : doc.path_items) {
        for (const auto& [m, op] : item.operations) {
            if (ignore.contains(m)) continue;
            bool ok = false;
            for (const auto& [code, r] : op.responses) ok = ok || (code >= 200 && code < 300);
            out.push_back({item.uri_template, m, ok});
        }
    }
    return out;
}

bool items_match(const Item& gen, const Item& gt, bool loose) {
    return gen.method == gt.method && match_paths(gen.uri, gt.uri, loose);
}

PrfScore score_items(const std::vector<Item>& gen, const std::vector<Item>& gt, bool loose) {
    PrfScore s;
    std::vector<bool> gt_hit(gt.size(), false);
    std::size_t tp = 0;
    for (const auto& g : gen) {
        bool matched = false;
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (items_match(g, gt[j], loose)) {
                matched = true;
                gt_hit[j] = true;
            }
        }
        (matched ? s.tp : s.fp).push_back(g.label());
        if (matched) ++tp;
    }
    std::size_t gt_mapped = 0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
        if (gt_hit[j]) {
            ++gt_mapped;
        } else {
            s.fn.push_back(gt[j].label());
        }
    }
    if (gen.empty() && gt.empty()) {
        s.precision = s.recall = 1.0;
    } else {
        s.precision = gen.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gen.size());
        s.recall = gt.empty() ? 0.0 : static_cast<double>(gt_mapped) / static_cast<double>(gt.size());
    }
    s.f1 = f1_of(s.precision, s.recall);
    s.duplication = tp == 0 ? 1.0 : static_cast<double>(gt_mapped) / static_cast<double>(tp);
    return s;
}

ordered_json prf_json(const PrfScore& s) {
    ordered_json j;
    j["precision"] = s.precision;
    j["recall"] = s.recall;
    j["f1"] = s.f1;
    j["duplication"] = s.duplication;
    j["tp"] = s.tp;
    j["fp"] = s.fp;
    j["fn"] = s.fn;
    return j;
}

void accumulate(PrfScore& into, const PrfScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
    into.duplication += s.duplication;
}

void divide(PrfScore& s, double n) {
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
    s.duplication /= n;
}

}  // namespace

bool match_paths(const UriTemplate& gen, const UriTemplate& gt, bool loose) {
    if (gen.segments.size() != gt.segments.size()) return false;
    for (std::size_t i = 0; i < gen.segments.size(); ++i) {
        const auto& a = gen.segments[i];
        const auto& b = gt.segments[i];
        if (a.is_parameter && b.is_parameter) continue;
        if (!a.is_parameter && !b.is_parameter) {
            if (a.text != b.text) return false;
            continue;
        }
        if (!loose) return false;
    }
    return true;
}

double f1_of(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

SpecMetrics score(const SpecDocument& gen, const SpecDocument& gt, const MatchOptions& opts) {
    SpecMetrics m;
    m.paths = score_items(path_items(gen), path_items(gt), opts.loose);
    m.operations = score_items(operation_items(gen, {}), operation_items(gt, {}), opts.loose);
    m.operations_star =
        score_items(operation_items(gen, opts.ignore_methods), operation_items(gt, opts.ignore_methods), opts.loose);
    return m;
}

ordered_json SpecMetrics::to_json() const {
    ordered_json j;
    j["paths"] = prf_json(paths);
    j["operations"] = prf_json(operations);
    j["operations_star"] = prf_json(operations_star);
    return j;
}

Aggregate aggregate(const std::vector<std::pair<SpecDocument, SpecDocument>>& pairs, const MatchOptions& opts) {
    Aggregate agg;
    struct Counts {
        std::size_t tp = 0, gen = 0, gt = 0, mapped = 0;
    };
    Counts cp, co, cs;
    auto add = [](PrfScore& into, Counts& c, const PrfScore& s, std::size_t gt_size) {
        c.tp += s.tp.size();
        c.gen += s.tp.size() + s.fp.size();
        c.gt += gt_size;
        c.mapped += gt_size - s.fn.size();
        into.tp.insert(into.tp.end(), s.tp.begin(), s.tp.end());
        into.fp.insert(into.fp.end(), s.fp.begin(), s.fp.end());
        into.fn.insert(into.fn.end(), s.fn.begin(), s.fn.end());
    };
    for (const auto& [gen, gt] : pairs) {
        auto m = score(gen, gt, opts);
        accumulate(agg.macro.paths, m.paths);
        accumulate(agg.macro.operations, m.operations);
        accumulate(agg.macro.operations_star, m.operations_star);
        add(agg.micro.paths, cp, m.paths, path_items(gt).size());
        add(agg.micro.operations, co, m.operations, operation_items(gt, {}).size());
        add(agg.micro.operations_star, cs, m.operations_star, operation_items(gt, opts.ignore_methods).size());
    }
    auto finish = [](PrfScore& s, const Counts& c) {
        if (c.gen == 0 && c.gt == 0) {
            s.precision = s.recall = 1.0;
        } else {
            s.precision = c.gen == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.gen);
            s.recall = c.gt == 0 ? 0.0 : static_cast<double>(c.mapped) / static_cast<double>(c.gt);
        }
        s.f1 = f1_of(s.precision, s.recall);
        s.duplication = c.tp == 0 ? 1.0 : static_cast<double>(c.mapped) / static_cast<double>(c.tp);
    };
    finish(agg.micro.paths, cp);
    finish(agg.micro.operations, co);
    finish(agg.micro.operations_star, cs);
    if (pairs.empty()) {
        agg.macro = agg.micro;
    } else {
        const auto n = static_cast<double>(pairs.size());
        divide(agg.macro.paths, n);
        divide(agg.macro.operations, n);
        divide(agg.macro.operations_star, n);
    }
    return agg;
}

DiffReport diff_report(const SpecDocument& gen, const SpecDocument& gt, const MatchOptions& opts) {
    DiffReport r;
    const auto gen_ops = operation_items(gen, {});
    const auto gt_ops = operation_items(gt, {});
    for (const auto& g : gen_ops) {
        bool matched = false;
        for (const auto& t : gt_ops) matched = matched || items_match(g, t, opts.loose);
        if (matched) continue;
        r.false_positives.push_back(g.label());
        if (g.has_success) r.inconsistencies.push_back({g.label(), "implemented-but-undocumented"});
    }
    for (const auto& t : gt_ops) {
        bool matched = false;
        for (const auto& g : gen_ops) matched = matched || items_match(g, t, opts.loose);
        if (!matched) r.false_negatives.push_back(t.label());
    }
    return r;
}

ordered_json DiffReport::to_json() const {
    ordered_json j;
    j["false_positives"] = false_positives;
    j["false_negatives"] = false_negatives;
    ordered_json inc = ordered_json::array();
    for (const auto& i : inconsistencies) inc.push_back({{"item", i.item}, {"kind", i.kind}});
    j["inconsistencies"] = inc;
    return j;
}

std::string DiffReport::to_text() const {
    std::ostringstream out;
    out << "false positives (" << false_positives.size() << ")\n";
    for (const auto& s : false_positives) out << "  + " << s << "\n";
    out << "false negatives (" << false_negatives.size() << ")\n";
    for (const auto& s : false_negatives) out << "  - " << s << "\n";
    out << "suspected inconsistencies (" << inconsistencies.size() << ")\n";
    for (const auto& i : inconsistencies) out << "  ! " << i.item << "  " << i.kind << "\n";
    return out.str();
}

}  // namespace carver::evaluate
