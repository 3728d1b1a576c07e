#pragma once

// API graph: a rooted DAG of URI path segments. Every complete root-to-endpoint
// path corresponds to an observed URI shape; segments whose concrete parents
// differ are joined when both are endpoints with structurally equal responses.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "carver/model.hpp"
#include "carver/similarity.hpp"

namespace carver::graph {

using NodeId = std::size_t;

struct PathSegment {
    std::string name;
    std::size_t index = 0;       // position of the segment in its URI
    std::string parent_path;     // "/seg0/.../seg(d-1)", "" at depth 0
    bool endpoint = false;
    std::optional<similarity::Payload> payload;  // representative response
    std::optional<std::string> var;               // "var<k>" once inferred
    // Concrete paths of URIs absorbed through response comparison.
    std::vector<std::string> aliases;
};

// Payload used for similarity when `resp` carries a JSON or XML body.
std::optional<similarity::Payload> representative_payload(const HttpResponse& resp);

bool are_equal(const PathSegment& a, const PathSegment& b, double tau = 0.0);

class ApiGraph {
public:
    explicit ApiGraph(std::string base_url = {}, double tau = 0.0);

    const std::string& base_url() const { return base_url_; }
    double tau() const { return tau_; }

    NodeId root() const { return 0; }
    std::size_t node_count() const { return nodes_.size(); }
    const PathSegment& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<NodeId>& children(NodeId id) const { return children_.at(id); }
    const std::vector<NodeId>& parents(NodeId id) const { return parents_.at(id); }
    bool has_edge(NodeId from, NodeId to) const;
    std::set<std::pair<NodeId, NodeId>> edges() const;
    const std::vector<ApiCall>& endpoint_calls(NodeId id) const;

    // Concrete path of the first call that reached this endpoint.
    std::optional<std::string> concrete_path(NodeId id) const;

    void set_var(NodeId id, std::optional<std::string> var) { nodes_.at(id).var = std::move(var); }
    void clear_vars();

    // Adds one call; the call's URL must lie under base_url. Returns the node
    // the URI terminates at.
    NodeId insert(const ApiCall& call);

    // Follows children by exact segment name from the root.
    std::optional<NodeId> find_path(const std::vector<std::string>& segments) const;

    // Every root-to-node path, parents visited in insertion order.
    std::vector<std::vector<NodeId>> paths_to(NodeId id) const;

    // "/users/user1"; segments with a variable render as "{var0}" when with_vars.
    std::string render(const std::vector<NodeId>& path, bool with_vars = false) const;

private:
    NodeId add_node(PathSegment seg);
    void add_edge(NodeId from, NodeId to);

    std::string base_url_;
    double tau_;
    std::vector<PathSegment> nodes_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::vector<NodeId>> parents_;
    std::map<NodeId, std::vector<ApiCall>> calls_;
    std::map<std::pair<std::string, std::size_t>, std::vector<NodeId>> by_name_;
};

using GraphPath = std::vector<NodeId>;

ApiGraph build_api_graph(const std::vector<ApiCall>& calls, const std::string& base_url, double tau = 0.0);
// Extends `existing` in place.
void build_api_graph(const std::vector<ApiCall>& calls, ApiGraph& existing);

// Nodes with more than one predecessor, ordered by depth then name.
std::vector<NodeId> join_nodes(const ApiGraph& g);
// Non-root nodes without a response, in insertion order.
std::vector<NodeId> intermediate_nodes(const ApiGraph& g);
std::vector<GraphPath> complete_paths(const ApiGraph& g);

// Graphviz rendering; fill colour distinguishes recorded, probe-discovered and
// probe-augmented endpoints.
std::string to_dot(const ApiGraph& g);

}  // namespace carver::graph
