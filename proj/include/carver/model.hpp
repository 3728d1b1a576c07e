#pragma once

// Traffic-level value types shared by every stage of the pipeline.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carver/error.hpp"

namespace carver {

enum class HttpMethod { Get, Post, Put, Patch, Delete, Options, Head, Trace, Connect };

std::string_view to_string(HttpMethod m);
std::optional<HttpMethod> parse_method(std::string_view s);
bool is_mutating(HttpMethod m);  // POST, PUT, PATCH, DELETE

using Header = std::pair<std::string, std::string>;
using Headers = std::vector<Header>;

// Case-insensitive lookup of the first header named `name`.
std::optional<std::string> find_header(const Headers& headers, std::string_view name);
std::vector<std::string> find_all_headers(const Headers& headers, std::string_view name);
bool iequals(std::string_view a, std::string_view b);

struct HttpRequest {
    HttpMethod method = HttpMethod::Get;
    std::string url;
    Headers headers;
    std::optional<std::string> body;
    std::optional<std::string> body_mime;

    bool operator==(const HttpRequest&) const = default;
};

struct HttpResponse {
    int status = 200;
    Headers headers;
    std::optional<std::string> body;
    std::optional<std::string> body_mime;

    bool operator==(const HttpResponse&) const = default;
};

enum class Origin { Recorded, Probe };

std::string_view to_string(Origin o);
std::optional<Origin> parse_origin(std::string_view s);

struct ApiCall {
    HttpRequest request;
    HttpResponse response;
    std::size_t sequence_index = 0;
    Origin origin = Origin::Recorded;

    bool operator==(const ApiCall&) const = default;
};

struct ApiSequence {
    std::string base_url;
    std::vector<ApiCall> calls;

    bool operator==(const ApiSequence&) const = default;

    // Reassigns sequence_index to 0..n-1 in current order.
    void reindex();
};

struct Url {
    std::string scheme;     // lowercased; empty for path-absolute references
    std::string authority;  // host[:port], empty for path-absolute references
    std::string path;       // raw, never empty ("/" at least)
    std::optional<std::string> query;
    std::optional<std::string> fragment;

    std::string origin() const { return scheme.empty() ? std::string{} : scheme + "://" + authority; }
};

// Throws MalformedUri.
Url parse_url(std::string_view text);

// Percent-decoded, non-empty path segments of `url` that follow the path of
// `base_url`. With an empty base every segment is returned.
std::vector<std::string> parse_path(std::string_view url, std::string_view base_url = {});

// "/a/b" for {"a","b"}; "/" for {}.
std::string join_path(const std::vector<std::string>& segments);

// Path of `url` relative to `base_url`, normalized and still percent-encoded.
std::string relative_path(std::string_view url, std::string_view base_url);

bool has_base_prefix(std::string_view url, std::string_view base_url);

std::string canonical_mime(std::string_view raw);
bool is_json_mime(std::string_view canonical);
bool is_xml_mime(std::string_view canonical);

std::string percent_decode(std::string_view s);
// Encodes everything outside RFC 3986 unreserved characters.
std::string percent_encode(std::string_view s);

std::string base64_encode(std::string_view bytes);
// Throws Error on invalid input.
std::string base64_decode(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

}  // namespace carver
