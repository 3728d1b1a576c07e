#pragma once

// Directed API probing: probe generation from graph structure, responses and
// method coverage; checkpoint-aware scheduling; staged execution that feeds
// successful probes back into the graph.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carver/graph.hpp"
#include "carver/model.hpp"
#include "carver/testsuite.hpp"

namespace carver::probe {

enum class Strategy { Intermediate, Bipartite, Response, Operation };

inline constexpr Strategy kStageOrder[] = {Strategy::Intermediate, Strategy::Bipartite, Strategy::Response,
                                           Strategy::Operation};

std::string_view to_string(Strategy s);
// Throws Error for unknown names.
Strategy parse_strategy(std::string_view s);

struct Attempt {
    std::size_t slot = 0;
    std::optional<HttpResponse> response;
    std::string error;
};

struct Probe {
    HttpRequest request;
    Strategy strategy = Strategy::Intermediate;
    // Position k means "immediately before original call k"; n is the end.
    std::vector<std::size_t> schedule_slots;
    std::vector<Attempt> attempts;
};

enum class CheckpointKind { Cookie, Operation };

struct Checkpoint {
    std::size_t index = 0;
    CheckpointKind kind = CheckpointKind::Operation;

    bool operator==(const Checkpoint&) const = default;
};

struct ProbeBudget {
    std::size_t max_probes_executed = std::numeric_limits<std::size_t>::max();
    std::optional<std::chrono::milliseconds> max_wall_time;
    std::set<Strategy> stages_enabled{Strategy::Intermediate, Strategy::Bipartite, Strategy::Response,
                                      Strategy::Operation};
    bool unsafe_methods = true;
    std::size_t response_depth = 2;
    std::size_t response_token_cap = 64;
};

// Reads the [probe] table of a TOML file or the "probe" object of a JSON file:
// max_probes, max_time_s, stages, unsafe_methods. Throws Error.
ProbeBudget load_budget(const std::filesystem::path& path);

bool is_success(int status);

std::vector<Checkpoint> find_checkpoints(const ApiSequence& seq);

std::vector<Probe> gen_intermediate(const graph::ApiGraph& g);
std::vector<Probe> gen_bipartite(const graph::ApiGraph& g);
std::vector<Probe> gen_response(const graph::ApiGraph& g, const ProbeBudget& budget = {});
std::vector<Probe> gen_operation(const graph::ApiGraph& g, const std::vector<ApiCall>& calls,
                                 const ProbeBudget& budget = {});

// Keys and scalar values of a JSON payload down to `depth` object levels,
// deduplicated in document order.
std::vector<std::string> response_tokens(const nlohmann::json& payload, std::size_t depth);

std::vector<std::size_t> schedule(const Probe& probe, const ApiSequence& seq, const graph::ApiGraph& g,
                                  const std::vector<Checkpoint>& checkpoints);

struct StrategyStats {
    std::size_t generated = 0;
    std::size_t executed = 0;
    std::size_t succeeded = 0;

    StrategyStats& operator+=(const StrategyStats& o);
};

// Shared across stages: counts executed probes and wall time.
class BudgetTracker {
public:
    explicit BudgetTracker(const ProbeBudget& budget);
    bool exhausted() const;
    void count_execution() { ++executed_; }
    std::size_t executed() const { return executed_; }

private:
    const ProbeBudget& budget_;
    std::chrono::steady_clock::time_point start_;
    std::size_t executed_ = 0;
};

struct ExecutionTarget {
    testsuite::Transport* transport = nullptr;
    std::string base_url;
    // POSTed before each stage replay when set.
    std::optional<std::string> reset_path;
};

struct RetainedProbe {
    ApiCall call;
    std::size_t slot = 0;
    Strategy strategy = Strategy::Intermediate;
};

struct StageResult {
    std::vector<Probe> probes;  // with attempts
    std::vector<RetainedProbe> successes;  // earliest successful slot per probe
    std::map<Strategy, StrategyStats> stats;
    bool budget_exhausted = false;
};

// Replays `seq` once, injecting every probe before the original call at each
// of its slots. Probes must already be scheduled.
StageResult execute_stage(const ApiSequence& seq, std::vector<Probe> probes, BudgetTracker& budget,
                          const ExecutionTarget& target);

struct StageRecord {
    std::size_t pass = 0;
    Strategy strategy = Strategy::Intermediate;
    std::vector<Probe> probes;
    std::vector<RetainedProbe> successes;
};

struct ExpansionResult {
    graph::ApiGraph graph;
    ApiSequence sequence;  // original calls plus retained probes at their slots
    std::vector<StageRecord> stages;
    std::map<Strategy, StrategyStats> stats;
    bool budget_exhausted = false;

    nlohmann::ordered_json stats_json() const;
};

ExpansionResult expand(const ApiSequence& seq, const graph::ApiGraph& g, const ProbeBudget& budget,
                       const ExecutionTarget& target);

}  // namespace carver::probe
