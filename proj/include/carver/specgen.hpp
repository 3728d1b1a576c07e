#pragma once

// URI template extraction and OpenAPI document generation from an API graph.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carver/graph.hpp"
#include "carver/model.hpp"
#include "carver/similarity.hpp"

namespace carver::specgen {

enum class ParamType { Integer, String };

std::string_view to_string(ParamType t);

struct TemplateSegment {
    bool is_parameter = false;
    std::string text;  // literal text, or the parameter name
    std::vector<std::string> examples;
    ParamType type = ParamType::String;

    static TemplateSegment literal(std::string s) { return {false, std::move(s), {}, ParamType::String}; }
    static TemplateSegment parameter(std::string name, std::vector<std::string> examples = {});
};

struct UriTemplate {
    std::vector<TemplateSegment> segments;

    // "/users/{var0}/info"; "/" for the bare root.
    std::string render() const;
    std::vector<std::string> parameter_names() const;

    // Any segment containing "{" is a parameter.
    static UriTemplate parse(std::string_view path);

    // Literal segments equal, parameters match any single segment.
    bool matches(const std::vector<std::string>& concrete) const;
    std::size_t literal_count() const;
};

ParamType infer_type(const std::vector<std::string>& examples);

struct Parameter {
    std::string name;
    std::string in;  // path, query, header
    bool required = false;
    std::optional<ParamType> type;
    std::optional<std::string> example;

    bool operator==(const Parameter&) const = default;
};

struct ResponseSpec {
    std::optional<std::string> mime;
    std::optional<similarity::KeyTree> schema_tree;
    nlohmann::ordered_json schema;  // inline OpenAPI schema, null when no body
    std::optional<std::string> example;
};

struct OperationSpec {
    std::vector<Parameter> path_params;
    std::vector<Parameter> query_params;
    std::vector<Parameter> header_params;
    std::optional<std::string> request_mime;
    std::optional<similarity::KeyTree> request_schema;
    nlohmann::ordered_json request_schema_json;
    std::map<int, ResponseSpec> responses;
};

struct PathItem {
    UriTemplate uri_template;
    std::map<HttpMethod, OperationSpec> operations;
};

struct SpecDocument {
    std::string title = "Inferred API";
    std::string server_url;
    std::map<std::string, PathItem> path_items;  // keyed by rendered template
};

struct SpecConfig {
    std::string title = "Inferred API";
};

// Endpoints that share a predecessor and a depth and have structurally equal
// responses receive a common variable (transitive closure), var0, var1, ... in
// graph order.
graph::ApiGraph merge_leaf_nodes(graph::ApiGraph g);

std::vector<std::string> get_graph_paths(const graph::ApiGraph& g, graph::NodeId node);

// Index-wise agreement over equal-length paths. "{name}" segments already
// carry a variable; remaining differing positions receive fresh names.
UriTemplate get_uri_template(const std::vector<std::string>& paths);

// One path item per template shape. Items that would route the same recorded
// URI with equal specificity are unified.
SpecDocument extract_openapi(const graph::ApiGraph& g, const SpecConfig& cfg = {});

enum class Format { Json, Yaml };

nlohmann::ordered_json to_openapi_json(const SpecDocument& doc);
std::string render_openapi(const SpecDocument& doc, Format format);

// Reads OpenAPI 3.x or Swagger 2.0 (JSON or YAML): templates, methods, response
// codes and MIME types. Throws Error.
SpecDocument parse_openapi(std::string_view text);

// Inline schema guessed from a JSON value.
nlohmann::ordered_json schema_from_json(const nlohmann::json& value);

}  // namespace carver::specgen
