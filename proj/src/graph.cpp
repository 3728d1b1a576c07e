#include "carver/graph.hpp"

#include <algorithm>
#include <sstream>

namespace carver::graph {

namespace {

std::string parent_path_of(const std::vector<std::string>& segs, std::size_t i) {
    std::string out;
    for (std::size_t k = 0; k < i; ++k) {
        out += '/';
        out += segs[k];
    }
    return out;
}

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

std::optional<similarity::Payload> representative_payload(const HttpResponse& resp) {
    if (!resp.body || resp.body->empty() || !resp.body_mime) return std::nullopt;
    auto mime = canonical_mime(*resp.body_mime);
    if (!is_json_mime(mime) && !is_xml_mime(mime)) return std::nullopt;
    return similarity::Payload{*resp.body, mime};
}

bool are_equal(const PathSegment& a, const PathSegment& b, double tau) {
    if (a.name != b.name || a.index != b.index) return false;
    if (a.parent_path == b.parent_path) return true;
    if (a.endpoint && b.endpoint) {
        if (!a.payload || !b.payload) return false;
        return similarity::compare_responses(*a.payload, *b.payload, tau);
    }
    return false;
}

ApiGraph::ApiGraph(std::string base_url, double tau) : base_url_(std::move(base_url)), tau_(tau) {
    PathSegment root;
    root.name = "";
    add_node(std::move(root));
}

NodeId ApiGraph::add_node(PathSegment seg) {
    const NodeId id = nodes_.size();
    if (id != 0) by_name_[{seg.name, seg.index}].push_back(id);
    nodes_.push_back(std::move(seg));
    children_.emplace_back();
    parents_.emplace_back();
    return id;
}

void ApiGraph::add_edge(NodeId from, NodeId to) {
    if (has_edge(from, to)) return;
    children_[from].push_back(to);
    parents_[to].push_back(from);
}

bool ApiGraph::has_edge(NodeId from, NodeId to) const {
    const auto& c = children_.at(from);
    return std::find(c.begin(), c.end(), to) != c.end();
}

std::set<std::pair<NodeId, NodeId>> ApiGraph::edges() const {
    std::set<std::pair<NodeId, NodeId>> out;
    for (NodeId from = 0; from < children_.size(); ++from) {
        for (NodeId to : children_[from]) out.emplace(from, to);
    }
    return out;
}

const std::vector<ApiCall>& ApiGraph::endpoint_calls(NodeId id) const {
    static const std::vector<ApiCall> kEmpty;
    auto it = calls_.find(id);
    return it == calls_.end() ? kEmpty : it->second;
}

std::optional<std::string> ApiGraph::concrete_path(NodeId id) const {
    const auto& calls = endpoint_calls(id);
    if (calls.empty()) return std::nullopt;
    return join_path(parse_path(calls.front().request.url, base_url_));
}

void ApiGraph::clear_vars() {
    for (auto& n : nodes_) n.var.reset();
}

NodeId ApiGraph::insert(const ApiCall& call) {
    const auto segs = parse_path(call.request.url, base_url_);
    const auto payload = representative_payload(call.response);

    NodeId parent = root();
    if (segs.empty()) {
        auto& r = nodes_[root()];
        r.endpoint = true;
        if (!r.payload) r.payload = payload;
        calls_[root()].push_back(call);
        return root();
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const bool last = i + 1 == segs.size();
        PathSegment cand;
        cand.name = segs[i];
        cand.index = i;
        cand.parent_path = parent_path_of(segs, i);
        cand.endpoint = last;
        if (last) cand.payload = payload;

        std::optional<NodeId> match;
        // A same-named child of the current parent shares that parent, which
        // beats any join through response comparison.
        for (NodeId id : children_[parent]) {
            if (nodes_[id].name == cand.name) {
                match = id;
                break;
            }
        }
        if (auto it = by_name_.find({cand.name, cand.index}); !match && it != by_name_.end()) {
            for (NodeId id : it->second) {
                if (are_equal(cand, nodes_[id], tau_)) {
                    match = id;
                    break;
                }
            }
        }
        NodeId current;
        if (match) {
            current = *match;
            auto& n = nodes_[current];
            if (n.parent_path != cand.parent_path) {
                std::string concrete = cand.parent_path + "/" + cand.name;
                if (std::find(n.aliases.begin(), n.aliases.end(), concrete) == n.aliases.end()) {
                    n.aliases.push_back(std::move(concrete));
                }
            }
        } else {
            PathSegment seg = cand;
            seg.endpoint = false;
            seg.payload.reset();
            current = add_node(std::move(seg));
        }
        add_edge(parent, current);
        if (last) {
            auto& n = nodes_[current];
            n.endpoint = true;
            if (!n.payload) n.payload = payload;
            calls_[current].push_back(call);
        }
        parent = current;
    }
    return parent;
}

std::optional<NodeId> ApiGraph::find_path(const std::vector<std::string>& segments) const {
    NodeId cur = root();
    for (const auto& s : segments) {
        std::optional<NodeId> next;
        for (NodeId c : children_[cur]) {
            if (nodes_[c].name == s) {
                next = c;
                break;
            }
        }
        if (!next) return std::nullopt;
        cur = *next;
    }
    return cur;
}

std::vector<std::vector<NodeId>> ApiGraph::paths_to(NodeId id) const {
    if (id == root()) return {{root()}};
    std::vector<std::vector<NodeId>> out;
    for (NodeId p : parents_.at(id)) {
        for (auto path : paths_to(p)) {
            path.push_back(id);
            out.push_back(std::move(path));
        }
    }
    return out;
}

std::string ApiGraph::render(const std::vector<NodeId>& path, bool with_vars) const {
    std::string out;
    for (NodeId id : path) {
        if (id == root()) continue;
        const auto& n = nodes_[id];
        out += '/';
        out += with_vars && n.var ? "{" + *n.var + "}" : n.name;
    }
    return out.empty() ? "/" : out;
}

ApiGraph build_api_graph(const std::vector<ApiCall>& calls, const std::string& base_url, double tau) {
    ApiGraph g(base_url, tau);
    build_api_graph(calls, g);
    return g;
}

void build_api_graph(const std::vector<ApiCall>& calls, ApiGraph& existing) {
    for (const auto& c : calls) existing.insert(c);
}

std::vector<NodeId> join_nodes(const ApiGraph& g) {
    std::vector<NodeId> out;
    for (NodeId id = 1; id < g.node_count(); ++id) {
        if (g.parents(id).size() > 1) out.push_back(id);
    }
    std::stable_sort(out.begin(), out.end(), [&](NodeId a, NodeId b) {
        const auto& na = g.node(a);
        const auto& nb = g.node(b);
        if (na.index != nb.index) return na.index < nb.index;
        return na.name < nb.name;
    });
    return out;
}

std::vector<NodeId> intermediate_nodes(const ApiGraph& g) {
    std::vector<NodeId> out;
    for (NodeId id = 1; id < g.node_count(); ++id) {
        if (!g.node(id).endpoint) out.push_back(id);
    }
    return out;
}

std::vector<GraphPath> complete_paths(const ApiGraph& g) {
    std::vector<GraphPath> out;
    GraphPath cur{g.root()};
    auto walk = [&](auto&& self, NodeId id) -> void {
        if (g.node(id).endpoint) out.push_back(cur);
        for (NodeId c : g.children(id)) {
            cur.push_back(c);
            self(self, c);
            cur.pop_back();
        }
    };
    walk(walk, g.root());
    return out;
}

std::string to_dot(const ApiGraph& g) {
    std::ostringstream out;
    out << "digraph api {\n  rankdir=LR;\n  node [shape=ellipse, style=filled];\n";
    for (NodeId id = 0; id < g.node_count(); ++id) {
        const auto& n = g.node(id);
        std::string color = "white";
        if (n.endpoint) {
            bool recorded = false, probed = false;
            for (const auto& c : g.endpoint_calls(id)) {
                (c.origin == Origin::Probe ? probed : recorded) = true;
            }
            color = recorded && probed ? "yellow" : probed ? "palegreen" : "gray";
        }
        std::string label = id == g.root() ? "root" : n.name;
        if (n.var) label += "\\n{" + *n.var + "}";
        out << "  n" << id << " [label=\"" << dot_escape(label) << "\", fillcolor=" << color;
        if (n.var) out << ", penwidth=2";
        out << "];\n";
    }
    for (const auto& [from, to] : g.edges()) out << "  n" << from << " -> n" << to << ";\n";
    out << "}\n";
    return out.str();
}

}  // namespace carver::graph
