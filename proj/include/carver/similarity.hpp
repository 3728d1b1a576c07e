#pragma once

// Structural similarity of response payloads. Values are discarded; only the
// key skeleton of a JSON or XML document is compared.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carver/error.hpp"

namespace carver::similarity {

struct Payload {
    std::string body;
    std::string mime;  // canonical

    bool operator==(const Payload&) const = default;
};

// label is a key name, "$" for the document root, or "[]" for an array.
struct KeyTree {
    std::string label;
    std::vector<KeyTree> children;

    bool operator==(const KeyTree&) const = default;

    std::size_t size() const;
    // Compact "label(child,child)" form, e.g. "$([](author,id))".
    std::string to_string() const;
};

class MalformedPayload : public Error {
public:
    using Error::Error;
};

// Throws MalformedPayload for unparseable bodies or non JSON/XML types.
KeyTree key_tree(std::string_view body, std::string_view mime);
KeyTree key_tree(const Payload& p);
std::optional<KeyTree> try_key_tree(const Payload& p);

// Ordered tree edit distance, unit insert/delete/rename costs.
std::size_t tree_edit_distance(const KeyTree& a, const KeyTree& b);

// τ in [0, 1]; 0 requires identical key skeletons.
bool compare_responses(const Payload& a, const Payload& b, double tau = 0.0);

}  // namespace carver::similarity
