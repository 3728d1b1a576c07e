#include "carver/probe.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "carver/error.hpp"

namespace carver::probe {

namespace {

using nlohmann::json;

constexpr HttpMethod kProbeMethods[] = {HttpMethod::Get,     HttpMethod::Post, HttpMethod::Put,
                                        HttpMethod::Patch,   HttpMethod::Options, HttpMethod::Head,
                                        HttpMethod::Delete};

std::string base_of(const graph::ApiGraph& g) {
    std::string base = g.base_url();
    while (base.ends_with('/')) base.pop_back();
    return base;
}

Probe make_get(const std::string& url, Strategy s) {
    Probe p;
    p.request.method = HttpMethod::Get;
    p.request.url = url;
    p.strategy = s;
    return p;
}

std::string encoded_path(const graph::ApiGraph& g, const graph::GraphPath& path) {
    std::string out;
    for (auto id : path) {
        if (id == g.root()) continue;
        out += "/" + percent_encode(g.node(id).name);
    }
    return out;
}

bool reaches_endpoint(const graph::ApiGraph& g, const std::vector<std::string>& segments) {
    auto id = g.find_path(segments);
    return id && g.node(*id).endpoint;
}

void collect_tokens(const json& v, std::size_t level, std::size_t depth, std::vector<std::string>& out) {
    auto add = [&](std::string t) {
        if (!t.empty() && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    };
    if (v.is_object()) {
        if (level >= depth) return;
        for (const auto& [k, child] : v.items()) {
            add(k);
            collect_tokens(child, level + 1, depth, out);
        }
    } else if (v.is_array()) {
        for (const auto& child : v) collect_tokens(child, level, depth, out);
    } else if (v.is_string()) {
        add(v.get<std::string>());
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
        add(v.dump());
    } else if (v.is_number_float() || v.is_boolean()) {
        add(v.dump());
    }
}

void collect_labels(const similarity::KeyTree& t, std::size_t level, std::size_t depth,
                    std::vector<std::string>& out) {
    for (const auto& c : t.children) {
        if (c.label == "[]") {
            collect_labels(c, level, depth, out);
            continue;
        }
        if (level >= depth) return;
        if (std::find(out.begin(), out.end(), c.label) == out.end()) out.push_back(c.label);
        collect_labels(c, level + 1, depth, out);
    }
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Intermediate: return "intermediate";
        case Strategy::Bipartite: return "bipartite";
        case Strategy::Response: return "response";
        case Strategy::Operation: return "operation";
    }
    return "intermediate";
}

Strategy parse_strategy(std::string_view s) {
    const auto l = to_lower(s);
    for (auto st : kStageOrder) {
        if (l == to_string(st)) return st;
    }
    throw Error("unknown probe strategy: " + std::string(s));
}

ProbeBudget load_budget(const std::filesystem::path& path) {
    ProbeBudget b;
    auto apply_stages = [&](const std::vector<std::string>& names) {
        b.stages_enabled.clear();
        for (const auto& n : names) b.stages_enabled.insert(parse_strategy(n));
    };
    if (path.extension() == ".toml") {
        toml::table root;
        try {
            root = toml::parse_file(path.string());
        } catch (const toml::parse_error& e) {
            throw Error("invalid TOML config " + path.string() + ": " + std::string(e.description()));
        }
        const toml::table* t = root["probe"].as_table();
        if (!t) return b;
        if (auto v = (*t)["max_probes"].value<int64_t>()) b.max_probes_executed = static_cast<std::size_t>(*v);
        if (auto v = (*t)["max_time_s"].value<double>()) {
            b.max_wall_time = std::chrono::milliseconds(static_cast<long long>(*v * 1000));
        }
        if (auto v = (*t)["unsafe_methods"].value<bool>()) b.unsafe_methods = *v;
        if (auto arr = (*t)["stages"].as_array()) {
            std::vector<std::string> names;
            for (const auto& e : *arr) {
                if (auto s = e.value<std::string>()) names.push_back(*s);
            }
            apply_stages(names);
        }
        return b;
    }
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("invalid JSON config " + path.string() + ": " + e.what());
    }
    if (!root.contains("probe")) return b;
    const auto& p = root["probe"];
    try {
        if (p.contains("max_probes")) b.max_probes_executed = p["max_probes"].get<std::size_t>();
        if (p.contains("max_time_s")) {
            b.max_wall_time = std::chrono::milliseconds(static_cast<long long>(p["max_time_s"].get<double>() * 1000));
        }
        if (p.contains("unsafe_methods")) b.unsafe_methods = p["unsafe_methods"].get<bool>();
        if (p.contains("stages")) apply_stages(p["stages"].get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw Error("invalid probe config: " + std::string(e.what()));
    }
    return b;
}

bool is_success(int status) { return status > 0 && (status < 400 || status > 599); }

std::vector<Checkpoint> find_checkpoints(const ApiSequence& seq) {
    std::vector<Checkpoint> out;
    for (std::size_t i = 0; i < seq.calls.size(); ++i) {
        const auto& c = seq.calls[i];
        if (find_header(c.response.headers, "Set-Cookie")) {
            out.push_back({i, CheckpointKind::Cookie});
        } else if (is_mutating(c.request.method)) {
            out.push_back({i, CheckpointKind::Operation});
        }
    }
    return out;
}

std::vector<Probe> gen_intermediate(const graph::ApiGraph& g) {
    std::vector<Probe> out;
    const auto base = base_of(g);
    for (auto id : graph::intermediate_nodes(g)) {
        const auto paths = g.paths_to(id);
        if (paths.empty()) continue;
        out.push_back(make_get(base + encoded_path(g, paths.front()), Strategy::Intermediate));
    }
    return out;
}

std::vector<Probe> gen_bipartite(const graph::ApiGraph& g) {
    std::vector<Probe> out;
    std::set<std::string> seen;
    const auto base = base_of(g);
    for (auto join : graph::join_nodes(g)) {
        const auto& left = g.parents(join);
        std::vector<graph::NodeId> right;
        for (auto l : left) {
            for (auto r : g.children(l)) {
                if (std::find(right.begin(), right.end(), r) == right.end()) right.push_back(r);
            }
        }
        for (auto l : left) {
            const auto paths = g.paths_to(l);
            if (paths.empty()) continue;
            for (auto r : right) {
                if (g.has_edge(l, r)) continue;
                std::vector<std::string> segs;
                for (auto id : paths.front()) {
                    if (id != g.root()) segs.push_back(g.node(id).name);
                }
                segs.push_back(g.node(r).name);
                if (reaches_endpoint(g, segs)) continue;
                auto url = base + encoded_path(g, paths.front()) + "/" + percent_encode(g.node(r).name);
                if (seen.insert(url).second) out.push_back(make_get(url, Strategy::Bipartite));
            }
        }
    }
    return out;
}

std::vector<std::string> response_tokens(const json& payload, std::size_t depth) {
    std::vector<std::string> out;
    collect_tokens(payload, 0, depth, out);
    return out;
}

std::vector<Probe> gen_response(const graph::ApiGraph& g, const ProbeBudget& budget) {
    std::vector<Probe> out;
    std::set<std::string> seen;
    const auto base = base_of(g);
    for (graph::NodeId id = 0; id < g.node_count(); ++id) {
        const auto& n = g.node(id);
        if (!n.endpoint || !n.payload) continue;
        const auto concrete = g.concrete_path(id);
        if (!concrete) continue;
        std::vector<std::string> tokens;
        if (is_json_mime(n.payload->mime)) {
            json doc = json::parse(n.payload->body, nullptr, false);
            if (doc.is_discarded()) continue;
            tokens = response_tokens(doc, budget.response_depth);
        } else if (auto tree = similarity::try_key_tree(*n.payload)) {
            collect_labels(*tree, 0, budget.response_depth, tokens);
        } else {
            continue;
        }
        if (tokens.size() > budget.response_token_cap) tokens.resize(budget.response_token_cap);
        auto segs = parse_path(base + (*concrete == "/" ? "" : *concrete), base);
        const std::string prefix = *concrete == "/" ? "" : *concrete;
        for (const auto& t : tokens) {
            auto probe_segs = segs;
            probe_segs.push_back(t);
            if (reaches_endpoint(g, probe_segs)) continue;
            auto url = base + prefix + "/" + percent_encode(t);
            if (seen.insert(url).second) out.push_back(make_get(url, Strategy::Response));
        }
    }
    return out;
}

std::vector<Probe> gen_operation(const graph::ApiGraph& g, const std::vector<ApiCall>& calls,
                                 const ProbeBudget& budget) {
    std::vector<Probe> out;
    const auto base = base_of(g);
    for (graph::NodeId id = 0; id < g.node_count(); ++id) {
        if (!g.node(id).endpoint) continue;
        const auto concrete = g.concrete_path(id);
        if (!concrete) continue;
        const auto url = base + (*concrete == "/" ? "/" : *concrete);

        std::set<HttpMethod> observed;
        const HttpRequest* sample_body = nullptr;
        auto observe = [&](const ApiCall& c) {
            observed.insert(c.request.method);
            if (!sample_body && c.request.body && !c.request.body->empty()) sample_body = &c.request;
        };
        for (const auto& c : g.endpoint_calls(id)) observe(c);
        for (const auto& c : calls) {
            if (has_base_prefix(c.request.url, g.base_url()) &&
                join_path(parse_path(c.request.url, g.base_url())) == *concrete) {
                observe(c);
            }
        }
        for (auto m : kProbeMethods) {
            if (observed.contains(m)) continue;
            if (is_mutating(m) && !budget.unsafe_methods) continue;
            Probe p;
            p.strategy = Strategy::Operation;
            p.request.method = m;
            p.request.url = url;
            if (m == HttpMethod::Post || m == HttpMethod::Put || m == HttpMethod::Patch) {
                if (sample_body) {
                    p.request.body = sample_body->body;
                    p.request.body_mime = sample_body->body_mime.value_or("application/json");
                } else {
                    p.request.body = "{}";
                    p.request.body_mime = "application/json";
                }
                p.request.headers.emplace_back("Content-Type", *p.request.body_mime);
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<std::size_t> schedule(const Probe& probe, const ApiSequence& seq, const graph::ApiGraph& g,
                                  const std::vector<Checkpoint>& checkpoints) {
    const auto segs = parse_path(probe.request.url, g.base_url());
    if (auto id = g.find_path(segs); id && !segs.empty()) {
        std::optional<std::size_t> last;
        for (std::size_t i = 0; i < seq.calls.size(); ++i) {
            const auto& url = seq.calls[i].request.url;
            if (!has_base_prefix(url, g.base_url())) continue;
            const auto cs = parse_path(url, g.base_url());
            if (cs.size() >= segs.size() && std::equal(segs.begin(), segs.end(), cs.begin())) last = i;
        }
        if (last) return {*last};
    }
    if (checkpoints.empty()) return {0};
    std::vector<std::size_t> slots{checkpoints.front().index};
    for (const auto& cp : checkpoints) {
        const auto after = cp.index + 1;
        if (slots.back() != after) slots.push_back(after);
    }
    return slots;
}

StrategyStats& StrategyStats::operator+=(const StrategyStats& o) {
    generated += o.generated;
    executed += o.executed;
    succeeded += o.succeeded;
    return *this;
}

BudgetTracker::BudgetTracker(const ProbeBudget& budget)
    : budget_(budget), start_(std::chrono::steady_clock::now()) {}

bool BudgetTracker::exhausted() const {
    if (executed_ >= budget_.max_probes_executed) return true;
    if (budget_.max_wall_time) {
        return std::chrono::steady_clock::now() - start_ >= *budget_.max_wall_time;
    }
    return false;
}

StageResult execute_stage(const ApiSequence& seq, std::vector<Probe> probes, BudgetTracker& budget,
                          const ExecutionTarget& target) {
    if (!target.transport) throw Error("execute_stage: no transport");
    StageResult result;
    const std::size_t n = seq.calls.size();
    std::vector<std::vector<std::size_t>> plan(n + 1);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        ++result.stats[probes[i].strategy].generated;
        for (auto s : probes[i].schedule_slots) plan.at(std::min(s, n)).push_back(i);
    }

    testsuite::Executor exec(*target.transport, target.base_url, seq.base_url);
    if (target.reset_path) exec.reset(*target.reset_path);

    std::vector<std::optional<std::size_t>> retained(probes.size());
    for (std::size_t k = 0; k <= n && !result.budget_exhausted; ++k) {
        for (auto i : plan[k]) {
            if (budget.exhausted()) {
                result.budget_exhausted = true;
                break;
            }
            auto& p = probes[i];
            auto outcome = exec.execute(p.request, true);
            budget.count_execution();
            ++result.stats[p.strategy].executed;
            Attempt a;
            a.slot = k;
            a.response = outcome.result.response;
            a.error = outcome.diagnostic.empty() ? outcome.result.error : outcome.diagnostic;
            if (a.response && is_success(a.response->status) && !retained[i]) retained[i] = p.attempts.size();
            p.attempts.push_back(std::move(a));
        }
        if (k < n && !result.budget_exhausted) exec.execute(seq.calls[k].request);
    }

    for (std::size_t i = 0; i < probes.size(); ++i) {
        if (!retained[i]) continue;
        const auto& p = probes[i];
        const auto& a = p.attempts[*retained[i]];
        ApiCall call;
        call.request = p.request;
        call.response = *a.response;
        call.origin = Origin::Probe;
        result.successes.push_back({std::move(call), a.slot, p.strategy});
        ++result.stats[p.strategy].succeeded;
    }
    result.probes = std::move(probes);
    return result;
}

nlohmann::ordered_json ExpansionResult::stats_json() const {
    nlohmann::ordered_json j;
    for (auto s : kStageOrder) {
        auto it = stats.find(s);
        StrategyStats st = it == stats.end() ? StrategyStats{} : it->second;
        j[std::string(to_string(s))] = {
            {"generated", st.generated}, {"executed", st.executed}, {"succeeded", st.succeeded}};
    }
    j["budget_exhausted"] = budget_exhausted;
    j["stages_run"] = stages.size();
    return j;
}

ExpansionResult expand(const ApiSequence& seq, const graph::ApiGraph& g, const ProbeBudget& budget,
                       const ExecutionTarget& target) {
    ExpansionResult r{g, seq, {}, {}, false};
    BudgetTracker tracker(budget);
    std::set<std::pair<HttpMethod, std::string>> tried;
    for (const auto& c : seq.calls) {
        auto u = parse_url(c.request.url);
        tried.emplace(c.request.method, u.origin() + u.path);
    }

    for (std::size_t pass = 0;; ++pass) {
        bool progress = false;
        for (auto strategy : kStageOrder) {
            if (!budget.stages_enabled.contains(strategy)) continue;
            if (tracker.exhausted()) {
                r.budget_exhausted = true;
                break;
            }
            std::vector<Probe> generated;
            switch (strategy) {
                case Strategy::Intermediate: generated = gen_intermediate(r.graph); break;
                case Strategy::Bipartite: generated = gen_bipartite(r.graph); break;
                case Strategy::Response: generated = gen_response(r.graph, budget); break;
                case Strategy::Operation: generated = gen_operation(r.graph, r.sequence.calls, budget); break;
            }
            std::vector<Probe> fresh;
            for (auto& p : generated) {
                if (tried.emplace(p.request.method, p.request.url).second) fresh.push_back(std::move(p));
            }
            StageRecord record{pass, strategy, {}, {}};
            if (fresh.empty()) {
                r.stages.push_back(std::move(record));
                continue;
            }
            const auto cps = find_checkpoints(r.sequence);
            for (auto& p : fresh) p.schedule_slots = schedule(p, r.sequence, r.graph, cps);

            auto stage = execute_stage(r.sequence, std::move(fresh), tracker, target);
            for (const auto& [s, st] : stage.stats) r.stats[s] += st;
            if (stage.budget_exhausted) r.budget_exhausted = true;

            if (!stage.successes.empty()) {
                progress = true;
                std::vector<ApiCall> calls;
                for (const auto& s : stage.successes) calls.push_back(s.call);
                graph::build_api_graph(calls, r.graph);

                auto ordered = stage.successes;
                std::stable_sort(ordered.begin(), ordered.end(),
                                 [](const RetainedProbe& a, const RetainedProbe& b) { return a.slot < b.slot; });
                std::vector<ApiCall> merged;
                std::size_t next = 0;
                for (std::size_t k = 0; k <= r.sequence.calls.size(); ++k) {
                    while (next < ordered.size() && ordered[next].slot == k) merged.push_back(ordered[next++].call);
                    if (k < r.sequence.calls.size()) merged.push_back(r.sequence.calls[k]);
                }
                r.sequence.calls = std::move(merged);
                r.sequence.reindex();
            }
            record.probes = std::move(stage.probes);
            record.successes = std::move(stage.successes);
            r.stages.push_back(std::move(record));
            if (r.budget_exhausted) break;
        }
        if (!progress || r.budget_exhausted) break;
    }
    return r;
}

}  // namespace carver::probe
