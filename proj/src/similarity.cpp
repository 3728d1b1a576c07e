#include "carver/similarity.hpp"

#include <algorithm>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "carver/model.hpp"

namespace carver::similarity {

namespace {

void sort_children(KeyTree& t) {
    std::stable_sort(t.children.begin(), t.children.end(),
                     [](const KeyTree& a, const KeyTree& b) { return a.label < b.label; });
}

// Union of two skeletons with equal root labels: children matched by label.
void merge_into(KeyTree& dst, const KeyTree& src) {
    for (const auto& c : src.children) {
        auto it = std::find_if(dst.children.begin(), dst.children.end(),
                               [&](const KeyTree& d) { return d.label == c.label; });
        if (it == dst.children.end()) {
            dst.children.push_back(c);
        } else {
            merge_into(*it, c);
        }
    }
    sort_children(dst);
}

KeyTree tree_from_json(const nlohmann::json& v, std::string label) {
    KeyTree node{std::move(label), {}};
    if (v.is_object()) {
        for (const auto& [k, val] : v.items()) node.children.push_back(tree_from_json(val, k));
    } else if (v.is_array()) {
        KeyTree arr{"[]", {}};
        for (const auto& elem : v) merge_into(arr, tree_from_json(elem, "[]"));
        node.children.push_back(std::move(arr));
    }
    sort_children(node);
    return node;
}

KeyTree from_ptree(const boost::property_tree::ptree& pt, std::string label) {
    KeyTree node{std::move(label), {}};
    for (const auto& [key, child] : pt) {
        if (key == "<xmlattr>" || key == "<xmlcomment>") continue;
        KeyTree sub = from_ptree(child, key);
        auto it = std::find_if(node.children.begin(), node.children.end(),
                               [&](const KeyTree& d) { return d.label == key; });
        if (it == node.children.end()) {
            node.children.push_back(std::move(sub));
        } else {
            merge_into(*it, sub);
        }
    }
    sort_children(node);
    return node;
}

struct Flat {
    std::vector<const std::string*> label;  // postorder
    std::vector<std::size_t> leftmost;      // leftmost leaf descendant (postorder index)
};

std::size_t flatten(const KeyTree& t, Flat& f) {
    std::size_t first_leaf = f.label.size();
    bool have_leaf = false;
    for (const auto& c : t.children) {
        std::size_t lm = flatten(c, f);
        if (!have_leaf) {
            first_leaf = lm;
            have_leaf = true;
        }
    }
    f.label.push_back(&t.label);
    f.leftmost.push_back(have_leaf ? first_leaf : f.label.size() - 1);
    return f.leftmost.back();
}

std::vector<std::size_t> keyroots(const Flat& f) {
    std::vector<std::size_t> out;
    const std::size_t n = f.label.size();
    for (std::size_t i = 0; i < n; ++i) {
        bool is_root = true;
        for (std::size_t k = i + 1; k < n; ++k) {
            if (f.leftmost[k] == f.leftmost[i]) {
                is_root = false;
                break;
            }
        }
        if (is_root) out.push_back(i);
    }
    return out;
}

}  // namespace

std::size_t KeyTree::size() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
}

std::string KeyTree::to_string() const {
    std::string out = label;
    if (!children.empty()) {
        out += '(';
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (i) out += ',';
            out += children[i].to_string();
        }
        out += ')';
    }
    return out;
}

KeyTree key_tree(std::string_view body, std::string_view mime) {
    const std::string m = canonical_mime(mime);
    if (is_json_mime(m)) {
        try {
            return tree_from_json(nlohmann::json::parse(body), "$");
        } catch (const nlohmann::json::exception& e) {
            throw MalformedPayload(std::string("invalid JSON payload: ") + e.what());
        }
    }
    if (is_xml_mime(m)) {
        try {
            std::istringstream in{std::string(body)};
            boost::property_tree::ptree pt;
            boost::property_tree::read_xml(in, pt);
            return from_ptree(pt, "$");
        } catch (const boost::property_tree::ptree_error& e) {
            throw MalformedPayload(std::string("invalid XML payload: ") + e.what());
        }
    }
    throw MalformedPayload("unsupported payload type: " + m);
}

KeyTree key_tree(const Payload& p) { return key_tree(p.body, p.mime); }

std::optional<KeyTree> try_key_tree(const Payload& p) {
    try {
        return key_tree(p);
    } catch (const MalformedPayload&) {
        return std::nullopt;
    }
}

// Zhang & Shasha keyroot dynamic program.
std::size_t tree_edit_distance(const KeyTree& a, const KeyTree& b) {
    Flat fa, fb;
    flatten(a, fa);
    flatten(b, fb);
    const std::size_t na = fa.label.size();
    const std::size_t nb = fb.label.size();
    std::vector<std::vector<std::size_t>> td(na, std::vector<std::size_t>(nb, 0));
    std::vector<std::vector<std::size_t>> fd(na + 1, std::vector<std::size_t>(nb + 1, 0));

    for (std::size_t i : keyroots(fa)) {
        for (std::size_t j : keyroots(fb)) {
            const std::size_t li = fa.leftmost[i];
            const std::size_t lj = fb.leftmost[j];
            // fd[x][y]: forest fa[li..li+x-1] vs fb[lj..lj+y-1]
            fd[0][0] = 0;
            for (std::size_t x = 1; x <= i - li + 1; ++x) fd[x][0] = fd[x - 1][0] + 1;
            for (std::size_t y = 1; y <= j - lj + 1; ++y) fd[0][y] = fd[0][y - 1] + 1;
            for (std::size_t x = 1; x <= i - li + 1; ++x) {
                const std::size_t i1 = li + x - 1;
                for (std::size_t y = 1; y <= j - lj + 1; ++y) {
                    const std::size_t j1 = lj + y - 1;
                    const std::size_t del = fd[x - 1][y] + 1;
                    const std::size_t ins = fd[x][y - 1] + 1;
                    if (fa.leftmost[i1] == li && fb.leftmost[j1] == lj) {
                        const std::size_t ren = fd[x - 1][y - 1] + (*fa.label[i1] == *fb.label[j1] ? 0 : 1);
                        fd[x][y] = std::min({del, ins, ren});
                        td[i1][j1] = fd[x][y];
                    } else {
                        const std::size_t px = fa.leftmost[i1] - li;
                        const std::size_t py = fb.leftmost[j1] - lj;
                        fd[x][y] = std::min({del, ins, fd[px][py] + td[i1][j1]});
                    }
                }
            }
        }
    }
    return td[na - 1][nb - 1];
}

bool compare_responses(const Payload& a, const Payload& b, double tau) {
    auto ta = try_key_tree(a);
    auto tb = try_key_tree(b);
    if (!ta || !tb) return false;
    const double bound = tau * static_cast<double>(std::max(ta->size(), tb->size()));
    return static_cast<double>(tree_edit_distance(*ta, *tb)) <= bound;
}

}  // namespace carver::similarity
