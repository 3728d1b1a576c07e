#include "carver/specgen.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <set>

#include <yaml-cpp/yaml.h>

namespace carver::specgen {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array kMethodOrder{HttpMethod::Get,    HttpMethod::Post,    HttpMethod::Put,
                                  HttpMethod::Patch,  HttpMethod::Delete,  HttpMethod::Options,
                                  HttpMethod::Head,   HttpMethod::Trace,   HttpMethod::Connect};

std::vector<std::string> split_segments(std::string_view path) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto next = path.find('/', pos);
        if (next == std::string_view::npos) next = path.size();
        if (next > pos) out.emplace_back(path.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

bool is_var_token(std::string_view s) { return s.size() >= 2 && s.front() == '{' && s.back() == '}'; }

bool is_integer(std::string_view s) {
    if (s.starts_with('-')) s.remove_prefix(1);
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

std::vector<std::pair<std::string, std::string>> parse_query(std::string_view q) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t pos = 0;
    while (pos <= q.size()) {
        auto amp = q.find('&', pos);
        if (amp == std::string_view::npos) amp = q.size();
        auto part = q.substr(pos, amp - pos);
        if (!part.empty()) {
            auto eq = part.find('=');
            std::string k(part.substr(0, eq));
            std::string v = eq == std::string_view::npos ? "" : std::string(part.substr(eq + 1));
            std::replace(k.begin(), k.end(), '+', ' ');
            std::replace(v.begin(), v.end(), '+', ' ');
            out.emplace_back(percent_decode(k), percent_decode(v));
        }
        pos = amp + 1;
    }
    return out;
}

void merge_schema(ordered_json& into, const ordered_json& other) {
    if (into.is_null()) {
        into = other;
        return;
    }
    if (into.value("type", "") == "object" && other.value("type", "") == "object") {
        for (const auto& [k, v] : other["properties"].items()) {
            if (!into["properties"].contains(k)) {
                into["properties"][k] = v;
            } else {
                merge_schema(into["properties"][k], v);
            }
        }
    } else if (into.value("type", "") == "array" && other.value("type", "") == "array") {
        merge_schema(into["items"], other["items"]);
    }
}

ordered_json schema_from_tree(const similarity::KeyTree& t) {
    if (t.children.empty()) return {{"type", "string"}};
    if (t.children.size() == 1 && t.children.front().label == "[]") {
        return {{"type", "array"}, {"items", schema_from_tree(t.children.front())}};
    }
    ordered_json props = ordered_json::object();
    for (const auto& c : t.children) props[c.label] = schema_from_tree(c);
    return {{"type", "object"}, {"properties", props}};
}

std::string reason_phrase(int status) {
    switch (status) {
        case 200: return "OK";
        case 201: return "Created";
        case 202: return "Accepted";
        case 204: return "No Content";
        case 301: return "Moved Permanently";
        case 302: return "Found";
        case 304: return "Not Modified";
        default: break;
    }
    if (status >= 200 && status < 300) return "Success";
    if (status >= 300 && status < 400) return "Redirection";
    return "Response";
}

ordered_json parameter_json(const Parameter& p) {
    ordered_json j;
    j["name"] = p.name;
    j["in"] = p.in;
    j["required"] = p.required;
    if (p.type) j["schema"] = {{"type", std::string(to_string(*p.type))}};
    if (p.example) {
        if (p.type == ParamType::Integer && is_integer(*p.example)) {
            j["example"] = std::stoll(*p.example);
        } else {
            j["example"] = *p.example;
        }
    }
    return j;
}

ordered_json example_json(const std::optional<std::string>& mime, const std::string& body) {
    if (mime && is_json_mime(*mime)) {
        try {
            return ordered_json::parse(body);
        } catch (const json::exception&) {
        }
    }
    return body;
}

bool needs_quotes(const std::string& s) {
    if (s.empty()) return true;
    try {
        YAML::Node n = YAML::Load(s);
        if (!n.IsScalar()) return true;
        if (n.Tag() == "!") return false;
        // Plain scalars that YAML would read back as non-strings.
        bool b;
        double d;
        if (YAML::convert<bool>::decode(n, b)) return true;
        if (YAML::convert<double>::decode(n, d)) return true;
        if (s == "~" || s == "null" || s == "Null" || s == "NULL") return true;
        return n.as<std::string>() != s;
    } catch (const YAML::Exception&) {
        return true;
    }
}

void emit_yaml(YAML::Emitter& out, const ordered_json& j) {
    if (j.is_object()) {
        out << YAML::BeginMap;
        for (const auto& [k, v] : j.items()) {
            out << YAML::Key;
            if (needs_quotes(k)) out << YAML::DoubleQuoted;
            out << k << YAML::Value;
            emit_yaml(out, v);
        }
        out << YAML::EndMap;
    } else if (j.is_array()) {
        out << YAML::BeginSeq;
        for (const auto& v : j) emit_yaml(out, v);
        out << YAML::EndSeq;
    } else if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (needs_quotes(s)) out << YAML::DoubleQuoted;
        out << s;
    } else if (j.is_boolean()) {
        out << j.get<bool>();
    } else if (j.is_number_integer()) {
        out << j.get<long long>();
    } else if (j.is_number()) {
        out << j.get<double>();
    } else {
        out << YAML::Null;
    }
}

}  // namespace

std::string_view to_string(ParamType t) { return t == ParamType::Integer ? "integer" : "string"; }

TemplateSegment TemplateSegment::parameter(std::string name, std::vector<std::string> examples) {
    TemplateSegment s{true, std::move(name), std::move(examples), ParamType::String};
    s.type = infer_type(s.examples);
    return s;
}

ParamType infer_type(const std::vector<std::string>& examples) {
    if (examples.empty()) return ParamType::String;
    return std::all_of(examples.begin(), examples.end(), [](const std::string& e) { return is_integer(e); })
               ? ParamType::Integer
               : ParamType::String;
}

std::string UriTemplate::render() const {
    if (segments.empty()) return "/";
    std::string out;
    for (const auto& s : segments) {
        out += '/';
        out += s.is_parameter ? "{" + s.text + "}" : s.text;
    }
    return out;
}

std::vector<std::string> UriTemplate::parameter_names() const {
    std::vector<std::string> out;
    for (const auto& s : segments) {
        if (s.is_parameter) out.push_back(s.text);
    }
    return out;
}

UriTemplate UriTemplate::parse(std::string_view path) {
    UriTemplate t;
    for (auto& seg : split_segments(path)) {
        if (seg.find('{') != std::string::npos) {
            std::string name = is_var_token(seg) ? seg.substr(1, seg.size() - 2) : seg;
            t.segments.push_back(TemplateSegment{true, std::move(name), {}, ParamType::String});
        } else {
            t.segments.push_back(TemplateSegment::literal(seg));
        }
    }
    return t;
}

bool UriTemplate::matches(const std::vector<std::string>& concrete) const {
    if (concrete.size() != segments.size()) return false;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!segments[i].is_parameter && segments[i].text != concrete[i]) return false;
    }
    return true;
}

std::size_t UriTemplate::literal_count() const {
    return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(),
                                                  [](const TemplateSegment& s) { return !s.is_parameter; }));
}

graph::ApiGraph merge_leaf_nodes(graph::ApiGraph g) {
    g.clear_vars();
    std::vector<graph::NodeId> endpoints;
    for (graph::NodeId id = 1; id < g.node_count(); ++id) {
        if (g.node(id).endpoint && g.node(id).payload) endpoints.push_back(id);
    }
    std::stable_sort(endpoints.begin(), endpoints.end(),
                     [&](graph::NodeId a, graph::NodeId b) { return g.node(a).index < g.node(b).index; });

    auto siblings = [&](graph::NodeId a, graph::NodeId b) {
        for (auto p : g.parents(a)) {
            if (g.has_edge(p, b)) return true;
        }
        return false;
    };

    UnionFind uf(endpoints.size());
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        for (std::size_t j = i + 1; j < endpoints.size(); ++j) {
            const auto& a = g.node(endpoints[i]);
            const auto& b = g.node(endpoints[j]);
            if (a.index != b.index || !siblings(endpoints[i], endpoints[j])) continue;
            if (similarity::compare_responses(*a.payload, *b.payload, g.tau())) uf.unite(i, j);
        }
    }
    std::map<std::size_t, std::size_t> component_size;
    for (std::size_t i = 0; i < endpoints.size(); ++i) ++component_size[uf.find(i)];
    std::map<std::size_t, std::string> names;
    std::size_t next = 0;
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        const auto root = uf.find(i);
        if (component_size[root] < 2) continue;
        auto [it, fresh] = names.try_emplace(root, "");
        if (fresh) it->second = "var" + std::to_string(next++);
        g.set_var(endpoints[i], it->second);
    }
    return g;
}

std::vector<std::string> get_graph_paths(const graph::ApiGraph& g, graph::NodeId node) {
    std::vector<std::string> out;
    for (const auto& p : g.paths_to(node)) out.push_back(g.render(p, true));
    return out;
}

UriTemplate get_uri_template(const std::vector<std::string>& paths) {
    UriTemplate t;
    if (paths.empty()) return t;
    std::vector<std::vector<std::string>> split;
    for (const auto& p : paths) split.push_back(split_segments(p));
    const std::size_t n = split.front().size();
    for (const auto& s : split) {
        if (s.size() != n) throw Error("template paths differ in length");
    }

    std::set<std::string> used;
    for (const auto& s : split) {
        for (const auto& seg : s) {
            if (is_var_token(seg)) used.insert(seg.substr(1, seg.size() - 2));
        }
    }
    std::size_t counter = 0;
    auto fresh = [&] {
        std::string name;
        do {
            name = "var" + std::to_string(counter++);
        } while (used.contains(name));
        used.insert(name);
        return name;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const std::string& first = split.front()[i];
        const bool agree = std::all_of(split.begin(), split.end(),
                                       [&](const std::vector<std::string>& s) { return s[i] == first; });
        if (agree) {
            if (is_var_token(first)) {
                t.segments.push_back(TemplateSegment::parameter(first.substr(1, first.size() - 2)));
            } else {
                t.segments.push_back(TemplateSegment::literal(first));
            }
            continue;
        }
        std::vector<std::string> examples;
        for (const auto& s : split) {
            if (!is_var_token(s[i]) && std::find(examples.begin(), examples.end(), s[i]) == examples.end()) {
                examples.push_back(s[i]);
            }
        }
        t.segments.push_back(TemplateSegment::parameter(fresh(), std::move(examples)));
    }
    return t;
}

ordered_json schema_from_json(const json& value) {
    if (value.is_object()) {
        ordered_json props = ordered_json::object();
        for (const auto& [k, v] : value.items()) props[k] = schema_from_json(v);
        return {{"type", "object"}, {"properties", props}};
    }
    if (value.is_array()) {
        ordered_json items;
        for (const auto& e : value) merge_schema(items, schema_from_json(e));
        if (items.is_null()) items = ordered_json::object();
        return {{"type", "array"}, {"items", items}};
    }
    if (value.is_number_integer()) return {{"type", "integer"}};
    if (value.is_number()) return {{"type", "number"}};
    if (value.is_boolean()) return {{"type", "boolean"}};
    if (value.is_string()) return {{"type", "string"}};
    return {{"nullable", true}};
}

namespace {

ordered_json payload_schema(const similarity::Payload& p, const similarity::KeyTree& tree) {
    if (is_json_mime(p.mime)) {
        try {
            return schema_from_json(json::parse(p.body));
        } catch (const json::exception&) {
        }
    }
    return schema_from_tree(tree.children.size() == 1 ? tree.children.front() : tree);
}

OperationSpec build_operation(HttpMethod method, const std::vector<const ApiCall*>& calls,
                              const UriTemplate& tmpl) {
    OperationSpec op;
    for (const auto& seg : tmpl.segments) {
        if (!seg.is_parameter) continue;
        Parameter p;
        p.name = seg.text;
        p.in = "path";
        p.required = true;
        p.type = seg.type;
        if (!seg.examples.empty()) p.example = seg.examples.front();
        op.path_params.push_back(std::move(p));
    }

    std::map<std::string, std::vector<std::string>> query_values;
    std::vector<std::string> query_order;
    bool authorization = false;
    for (const auto* c : calls) {
        if (auto q = parse_url(c->request.url).query) {
            for (auto& [k, v] : parse_query(*q)) {
                if (!query_values.contains(k)) query_order.push_back(k);
                query_values[k].push_back(v);
            }
        }
        if (find_header(c->request.headers, "Authorization")) authorization = true;

        if (is_mutating(method) && !op.request_schema && c->request.body && c->request.body_mime) {
            similarity::Payload body{*c->request.body, canonical_mime(*c->request.body_mime)};
            if (auto tree = similarity::try_key_tree(body)) {
                op.request_mime = body.mime;
                op.request_schema_json = payload_schema(body, *tree);
                op.request_schema = std::move(tree);
            }
        }

        const int status = c->response.status;
        if (op.responses.contains(status)) continue;
        ResponseSpec r;
        if (c->response.body && !c->response.body->empty()) {
            r.mime = c->response.body_mime ? canonical_mime(*c->response.body_mime) : "application/octet-stream";
            r.example = *c->response.body;
            if (auto payload = graph::representative_payload(c->response)) {
                if (auto tree = similarity::try_key_tree(*payload)) {
                    r.schema = payload_schema(*payload, *tree);
                    r.schema_tree = std::move(tree);
                }
            }
        }
        op.responses.emplace(status, std::move(r));
    }
    for (const auto& k : query_order) {
        const auto& values = query_values[k];
        Parameter p;
        p.name = k;
        p.in = "query";
        p.required = false;
        p.type = infer_type(values);
        p.example = values.front();
        op.query_params.push_back(std::move(p));
    }
    if (authorization) op.header_params.push_back(Parameter{"Authorization", "header", false, ParamType::String, {}});
    return op;
}

}  // namespace

namespace {

std::string template_shape(const UriTemplate& t) {
    std::string shape;
    for (const auto& seg : t.segments) shape += seg.is_parameter ? "/{}" : "/" + seg.text;
    return shape;
}

}  // namespace

SpecDocument extract_openapi(const graph::ApiGraph& input, const SpecConfig& cfg) {
    SpecDocument doc;
    doc.title = cfg.title;
    doc.server_url = input.base_url();
    const graph::ApiGraph g = merge_leaf_nodes(input);

    struct Group {
        UriTemplate tmpl;
        std::vector<graph::NodeId> nodes;
    };
    std::map<std::string, Group> groups;
    // Templates that differ only in parameter names describe the same path
    // item; the first one's names are kept.
    auto add = [&](UriTemplate tmpl, const std::vector<graph::NodeId>& nodes) {
        auto& grp = groups[template_shape(tmpl)];
        if (grp.nodes.empty()) grp.tmpl = std::move(tmpl);
        grp.nodes.insert(grp.nodes.end(), nodes.begin(), nodes.end());
    };
    for (graph::NodeId id = 0; id < g.node_count(); ++id) {
        if (g.node(id).endpoint) add(get_uri_template(get_graph_paths(g, id)), {id});
    }

    // Sparse observations can leave a URI under two equally specific
    // templates (/a/1/b/{x} and /a/{y}/b/2 both match /a/1/b/2). Such items
    // are unified until every recorded URI routes to one template.
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& [shape, grp] : groups) {
            for (auto id : grp.nodes) {
                for (const auto& c : g.endpoint_calls(id)) {
                    auto segs = parse_path(c.request.url, g.base_url());
                    std::vector<std::string> best;
                    std::size_t best_literals = 0;
                    for (const auto& [other_shape, other] : groups) {
                        if (!other.tmpl.matches(segs)) continue;
                        auto lc = other.tmpl.literal_count();
                        if (best.empty() || lc > best_literals) best.clear(), best_literals = lc;
                        if (lc == best_literals) best.push_back(other_shape);
                    }
                    if (best.size() < 2) continue;
                    std::vector<std::string> rendered;
                    std::vector<graph::NodeId> nodes;
                    for (const auto& b : best) {
                        rendered.push_back(groups[b].tmpl.render());
                        nodes.insert(nodes.end(), groups[b].nodes.begin(), groups[b].nodes.end());
                    }
                    for (const auto& b : best) groups.erase(b);
                    std::sort(nodes.begin(), nodes.end());
                    add(get_uri_template(rendered), nodes);
                    changed = true;
                    break;
                }
                if (changed) break;
            }
            if (changed) break;
        }
    }

    for (auto& [shape, grp] : groups) {
        std::vector<const ApiCall*> calls;
        for (auto id : grp.nodes) {
            for (const auto& c : g.endpoint_calls(id)) calls.push_back(&c);
        }
        // Examples come from concrete request URIs only.
        for (std::size_t i = 0; i < grp.tmpl.segments.size(); ++i) {
            auto& seg = grp.tmpl.segments[i];
            if (!seg.is_parameter) continue;
            seg.examples.clear();
            for (const auto* c : calls) {
                auto segs = parse_path(c->request.url, g.base_url());
                if (i < segs.size() && std::find(seg.examples.begin(), seg.examples.end(), segs[i]) == seg.examples.end()) {
                    seg.examples.push_back(segs[i]);
                }
            }
            seg.type = infer_type(seg.examples);
        }

        PathItem item;
        item.uri_template = grp.tmpl;
        std::map<HttpMethod, std::vector<const ApiCall*>> by_method;
        for (const auto* c : calls) by_method[c->request.method].push_back(c);
        for (const auto& [method, mcalls] : by_method) {
            item.operations.emplace(method, build_operation(method, mcalls, grp.tmpl));
        }
        doc.path_items.emplace(grp.tmpl.render(), std::move(item));
    }
    return doc;
}

ordered_json to_openapi_json(const SpecDocument& doc) {
    ordered_json root;
    root["openapi"] = "3.0.3";
    root["info"] = {{"title", doc.title}, {"version", "1.0.0"}};
    root["servers"] = ordered_json::array({ordered_json{{"url", doc.server_url}}});
    ordered_json paths = ordered_json::object();
    for (const auto& [key, item] : doc.path_items) {
        ordered_json pj = ordered_json::object();
        for (auto method : kMethodOrder) {
            auto it = item.operations.find(method);
            if (it == item.operations.end()) continue;
            const auto& op = it->second;
            ordered_json oj = ordered_json::object();
            ordered_json params = ordered_json::array();
            for (const auto& p : op.path_params) params.push_back(parameter_json(p));
            for (const auto& p : op.query_params) params.push_back(parameter_json(p));
            for (const auto& p : op.header_params) params.push_back(parameter_json(p));
            if (!params.empty()) oj["parameters"] = params;
            if (op.request_mime && !op.request_schema_json.is_null()) {
                oj["requestBody"] = {{"content", {{*op.request_mime, {{"schema", op.request_schema_json}}}}}};
            }
            ordered_json responses = ordered_json::object();
            for (const auto& [status, r] : op.responses) {
                ordered_json rj;
                rj["description"] = reason_phrase(status);
                if (r.mime) {
                    ordered_json media = ordered_json::object();
                    if (!r.schema.is_null()) media["schema"] = r.schema;
                    if (r.example) media["example"] = example_json(r.mime, *r.example);
                    rj["content"] = {{*r.mime, media}};
                }
                responses[std::to_string(status)] = rj;
            }
            oj["responses"] = responses;
            pj[to_lower(to_string(method))] = oj;
        }
        paths[key] = pj;
    }
    root["paths"] = paths;
    return root;
}

std::string render_openapi(const SpecDocument& doc, Format format) {
    const auto j = to_openapi_json(doc);
    if (format == Format::Json) return j.dump(2) + "\n";
    YAML::Emitter out;
    emit_yaml(out, j);
    return std::string(out.c_str()) + "\n";
}

SpecDocument parse_openapi(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw Error(std::string("invalid OpenAPI document: ") + e.what());
    }
    if (!root.IsMap() || !(root["openapi"] || root["swagger"])) {
        throw Error("document is neither OpenAPI 3.x nor Swagger 2.0");
    }
    SpecDocument doc;
    try {
        if (auto info = root["info"]; info && info["title"]) doc.title = info["title"].as<std::string>();
        if (auto servers = root["servers"]; servers && servers.IsSequence() && servers.size() > 0) {
            doc.server_url = servers[0]["url"].as<std::string>("");
        } else if (root["host"]) {
            doc.server_url = root["host"].as<std::string>() + root["basePath"].as<std::string>("");
        }
        auto paths = root["paths"];
        if (paths && !paths.IsMap() && !paths.IsNull()) throw Error("paths must be a mapping");
        if (paths && paths.IsMap()) {
            for (const auto& entry : paths) {
                const auto key = entry.first.as<std::string>();
                PathItem item;
                item.uri_template = UriTemplate::parse(key);
                if (entry.second.IsMap()) {
                    for (const auto& op_entry : entry.second) {
                        auto method = parse_method(op_entry.first.as<std::string>());
                        if (!method) continue;  // parameters, summary, $ref, ...
                        OperationSpec op;
                        if (auto responses = op_entry.second["responses"]; responses && responses.IsMap()) {
                            for (const auto& r : responses) {
                                const auto code = r.first.as<std::string>();
                                if (!is_integer(code)) continue;
                                ResponseSpec rs;
                                if (auto content = r.second["content"]; content && content.IsMap() && content.size() > 0) {
                                    rs.mime = content.begin()->first.as<std::string>();
                                }
                                op.responses.emplace(std::stoi(code), std::move(rs));
                            }
                        }
                        item.operations.emplace(*method, std::move(op));
                    }
                }
                doc.path_items.emplace(item.uri_template.render(), std::move(item));
            }
        }
    } catch (const YAML::Exception& e) {
        throw Error(std::string("malformed OpenAPI document: ") + e.what());
    }
    return doc;
}

}  // namespace carver::specgen
