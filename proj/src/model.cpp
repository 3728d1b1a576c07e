#include "carver/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

namespace carver {

namespace {

constexpr std::array<std::pair<HttpMethod, std::string_view>, 9> kMethodNames{{
    {HttpMethod::Get, "GET"},
    {HttpMethod::Post, "POST"},
    {HttpMethod::Put, "PUT"},
    {HttpMethod::Patch, "PATCH"},
    {HttpMethod::Delete, "DELETE"},
    {HttpMethod::Options, "OPTIONS"},
    {HttpMethod::Head, "HEAD"},
    {HttpMethod::Trace, "TRACE"},
    {HttpMethod::Connect, "CONNECT"},
}};

std::vector<std::string_view> split_raw_segments(std::string_view path) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto next = path.find('/', pos);
        if (next == std::string_view::npos) next = path.size();
        if (next > pos) out.push_back(path.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

bool same_origin(const Url& a, const Url& b) {
    return iequals(a.scheme, b.scheme) && iequals(a.authority, b.authority);
}

// Index of the first segment of `url` past `base`, or nullopt when `url` is
// not under `base`.
std::optional<std::size_t> base_offset(const Url& url, const Url& base) {
    if (!url.scheme.empty() && !base.scheme.empty() && !same_origin(url, base)) return std::nullopt;
    auto url_segs = split_raw_segments(url.path);
    auto base_segs = split_raw_segments(base.path);
    if (base_segs.size() > url_segs.size()) return std::nullopt;
    for (std::size_t i = 0; i < base_segs.size(); ++i) {
        if (percent_decode(base_segs[i]) != percent_decode(url_segs[i])) return std::nullopt;
    }
    return base_segs.size();
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string_view to_string(HttpMethod m) {
    for (const auto& [method, name] : kMethodNames) {
        if (method == m) return name;
    }
    return "GET";
}

std::optional<HttpMethod> parse_method(std::string_view s) {
    for (const auto& [method, name] : kMethodNames) {
        if (iequals(name, s)) return method;
    }
    return std::nullopt;
}

bool is_mutating(HttpMethod m) {
    return m == HttpMethod::Post || m == HttpMethod::Put || m == HttpMethod::Patch ||
           m == HttpMethod::Delete;
}

std::string_view to_string(Origin o) { return o == Origin::Probe ? "probe" : "recorded"; }

std::optional<Origin> parse_origin(std::string_view s) {
    if (iequals(s, "recorded")) return Origin::Recorded;
    if (iequals(s, "probe")) return Origin::Probe;
    return std::nullopt;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

std::optional<std::string> find_header(const Headers& headers, std::string_view name) {
    for (const auto& [k, v] : headers) {
        if (iequals(k, name)) return v;
    }
    return std::nullopt;
}

std::vector<std::string> find_all_headers(const Headers& headers, std::string_view name) {
    std::vector<std::string> out;
    for (const auto& [k, v] : headers) {
        if (iequals(k, name)) out.push_back(v);
    }
    return out;
}

void ApiSequence::reindex() {
    for (std::size_t i = 0; i < calls.size(); ++i) calls[i].sequence_index = i;
}

Url parse_url(std::string_view text) {
    // RFC 3986, appendix B.
    static const std::regex kUriRe(R"(^(([A-Za-z][A-Za-z0-9+.-]*):)?(//([^/?#]*))?([^?#]*)(\?([^#]*))?(#(.*))?$)");
    std::string s(text);
    if (s.empty() ||
        std::any_of(s.begin(), s.end(), [](unsigned char c) { return c <= 0x20 || c == 0x7f; })) {
        throw MalformedUri(s);
    }
    std::smatch m;
    if (!std::regex_match(s, m, kUriRe)) throw MalformedUri(s);

    Url url;
    url.scheme = to_lower(m[2].str());
    url.authority = m[4].str();
    std::string path = m[5].str();
    const bool absolute = m[1].matched && m[3].matched && !url.authority.empty();
    const bool path_absolute = !m[1].matched && !m[3].matched && path.starts_with('/');
    if (!absolute && !path_absolute) throw MalformedUri(s);
    if (m[6].matched) url.query = m[7].str();
    if (m[8].matched) url.fragment = m[9].str();

    std::string normalized;
    for (auto seg : split_raw_segments(path)) {
        normalized += '/';
        normalized += seg;
    }
    url.path = normalized.empty() ? "/" : normalized;
    return url;
}

std::vector<std::string> parse_path(std::string_view url, std::string_view base_url) {
    Url u = parse_url(url);
    std::size_t offset = 0;
    if (!base_url.empty()) {
        auto off = base_offset(u, parse_url(base_url));
        if (!off) throw MalformedUri(std::string(url) + " (not under " + std::string(base_url) + ")");
        offset = *off;
    }
    auto raw = split_raw_segments(u.path);
    std::vector<std::string> out;
    for (std::size_t i = offset; i < raw.size(); ++i) {
        auto decoded = percent_decode(raw[i]);
        if (!decoded.empty()) out.push_back(std::move(decoded));
    }
    return out;
}

std::string join_path(const std::vector<std::string>& segments) {
    if (segments.empty()) return "/";
    std::string out;
    for (const auto& s : segments) {
        out += '/';
        out += s;
    }
    return out;
}

std::string relative_path(std::string_view url, std::string_view base_url) {
    Url u = parse_url(url);
    std::size_t offset = 0;
    if (!base_url.empty()) {
        auto off = base_offset(u, parse_url(base_url));
        if (!off) throw MalformedUri(std::string(url) + " (not under " + std::string(base_url) + ")");
        offset = *off;
    }
    auto raw = split_raw_segments(u.path);
    std::string out;
    for (std::size_t i = offset; i < raw.size(); ++i) {
        out += '/';
        out += raw[i];
    }
    return out.empty() ? "/" : out;
}

bool has_base_prefix(std::string_view url, std::string_view base_url) {
    try {
        Url u = parse_url(url);
        Url b = parse_url(base_url);
        if (b.scheme.empty() != u.scheme.empty()) return false;
        return base_offset(u, b).has_value();
    } catch (const MalformedUri&) {
        return false;
    }
}

std::string canonical_mime(std::string_view raw) {
    std::string lowered = to_lower(raw);
    auto semi = lowered.find(';');
    std::string media = trim(std::string_view(lowered).substr(0, semi));
    if (media.empty() || media.find('/') == std::string::npos) return lowered;
    return media;
}

bool is_json_mime(std::string_view canonical) {
    return canonical == "application/json" || canonical == "text/json" || canonical.ends_with("+json");
}

bool is_xml_mime(std::string_view canonical) {
    return canonical == "application/xml" || canonical == "text/xml" || canonical.ends_with("+xml");
}

std::string percent_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            int hi = hex_value(s[i + 1]);
            int lo = hex_value(s[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

std::string percent_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xf]);
        }
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kBase64Alphabet[(n >> 18) & 63]);
        out.push_back(kBase64Alphabet[(n >> 12) & 63]);
        out.push_back(kBase64Alphabet[(n >> 6) & 63]);
        out.push_back(kBase64Alphabet[n & 63]);
    }
    if (i < bytes.size()) {
        std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(kBase64Alphabet[(n >> 18) & 63]);
        out.push_back(kBase64Alphabet[(n >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? kBase64Alphabet[(n >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::string out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (c == '\n' || c == '\r' || c == ' ') continue;
        auto pos = kBase64Alphabet.find(c);
        if (pos == std::string_view::npos) {
            // URL-safe alphabet
            if (c == '-') pos = 62;
            else if (c == '_') pos = 63;
            else throw Error("invalid base64 input");
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(pos);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace carver
