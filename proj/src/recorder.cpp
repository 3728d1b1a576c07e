#include "carver/recorder.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "carver/error.hpp"
#include "carver/model.hpp"
#include "carver/timeutil.hpp"

namespace carver::recorder {

namespace {

constexpr int kIoTimeoutSec = 30;
constexpr std::size_t kMaxHead = 64 * 1024;

void set_timeouts(int fd) {
    timeval tv{kIoTimeoutSec, 0};
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

int connect_tcp(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        set_timeouts(fd);
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    return fd;
}

std::pair<std::string, std::string> split_host_port(const std::string& authority, const std::string& default_port) {
    if (authority.starts_with('[')) {
        auto close = authority.find(']');
        if (close == std::string::npos) return {authority, default_port};
        auto host = authority.substr(1, close - 1);
        if (close + 1 < authority.size() && authority[close + 1] == ':') return {host, authority.substr(close + 2)};
        return {host, default_port};
    }
    auto colon = authority.rfind(':');
    if (colon == std::string::npos) return {authority, default_port};
    return {authority.substr(0, colon), authority.substr(colon + 1)};
}

class Reader {
public:
    explicit Reader(int fd) : fd_(fd) {}

    std::optional<std::string> read_head() {
        std::size_t end;
        while ((end = buf_.find("\r\n\r\n")) == std::string::npos) {
            if (buf_.size() > kMaxHead || !fill()) return std::nullopt;
        }
        std::string head = buf_.substr(0, end);
        buf_.erase(0, end + 4);
        return head;
    }

    bool read_exact(std::size_t n, std::string& out) {
        while (buf_.size() < n) {
            if (!fill()) return false;
        }
        out.append(buf_, 0, n);
        buf_.erase(0, n);
        return true;
    }

    bool read_line(std::string& line) {
        std::size_t end;
        while ((end = buf_.find("\r\n")) == std::string::npos) {
            if (buf_.size() > kMaxHead || !fill()) return false;
        }
        line = buf_.substr(0, end);
        buf_.erase(0, end + 2);
        return true;
    }

    bool read_chunked(std::string& out) {
        for (;;) {
            std::string line;
            if (!read_line(line)) return false;
            auto semi = line.find(';');
            std::size_t size = 0;
            try {
                size = std::stoul(line.substr(0, semi), nullptr, 16);
            } catch (const std::exception&) {
                return false;
            }
            if (size == 0) {
                do {
                    if (!read_line(line)) return false;
                } while (!line.empty());
                return true;
            }
            if (!read_exact(size, out) || !read_line(line)) return false;
        }
    }

    void read_to_eof(std::string& out) {
        while (fill()) {
        }
        out += buf_;
        buf_.clear();
    }

    std::string take_buffer() { return std::exchange(buf_, {}); }

private:
    bool fill() {
        char tmp[16384];
        for (;;) {
            ssize_t n = ::recv(fd_, tmp, sizeof tmp, 0);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) return false;
            buf_.append(tmp, static_cast<std::size_t>(n));
            return true;
        }
    }

    int fd_;
    std::string buf_;
};

struct Head {
    std::string start_line;
    Headers headers;
};

Head parse_head(const std::string& text) {
    Head h;
    std::size_t pos = 0;
    bool first = true;
    while (pos <= text.size()) {
        auto end = text.find("\r\n", pos);
        if (end == std::string::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 2;
        if (first) {
            h.start_line = line;
            first = false;
            continue;
        }
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        h.headers.emplace_back(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
    }
    return h;
}

bool has_token(const Headers& h, std::string_view name, std::string_view token) {
    for (const auto& v : find_all_headers(h, name)) {
        std::size_t pos = 0;
        while (pos <= v.size()) {
            auto comma = v.find(',', pos);
            if (comma == std::string::npos) comma = v.size();
            if (iequals(trim(std::string_view(v).substr(pos, comma - pos)), token)) return true;
            pos = comma + 1;
        }
    }
    return false;
}

Headers strip_hop_by_hop(const Headers& h) {
    static const char* kHop[] = {"connection", "keep-alive", "proxy-connection", "transfer-encoding", "te",
                                 "trailer", "upgrade", "proxy-authorization", "proxy-authenticate"};
    std::set<std::string> drop(std::begin(kHop), std::end(kHop));
    for (const auto& v : find_all_headers(h, "Connection")) {
        std::size_t pos = 0;
        while (pos <= v.size()) {
            auto comma = v.find(',', pos);
            if (comma == std::string::npos) comma = v.size();
            drop.insert(to_lower(trim(std::string_view(v).substr(pos, comma - pos))));
            pos = comma + 1;
        }
    }
    Headers out;
    for (const auto& kv : h) {
        if (!drop.contains(to_lower(kv.first))) out.push_back(kv);
    }
    return out;
}

bool read_body(Reader& r, const Headers& h, std::string& body, bool is_response) {
    if (has_token(h, "Transfer-Encoding", "chunked")) return r.read_chunked(body);
    if (auto cl = find_header(h, "Content-Length")) {
        std::size_t n = 0;
        try {
            n = std::stoul(*cl);
        } catch (const std::exception&) {
            return false;
        }
        return r.read_exact(n, body);
    }
    if (is_response) r.read_to_eof(body);
    return true;
}

std::string serialize_headers(const Headers& h) {
    std::string out;
    for (const auto& [k, v] : h) out += k + ": " + v + "\r\n";
    return out;
}

nlohmann::ordered_json header_pairs(const Headers& h) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [k, v] : h) arr.push_back({k, v});
    return arr;
}

void simple_response(int fd, int status, std::string_view reason) {
    std::string body = std::string(reason) + "\n";
    send_all(fd, "HTTP/1.1 " + std::to_string(status) + " " + std::string(reason) +
                     "\r\nContent-Type: text/plain\r\nContent-Length: " + std::to_string(body.size()) +
                     "\r\nConnection: close\r\n\r\n" + body);
}

}  // namespace

void parse_listen(const std::string& text, ProxyConfig& cfg) {
    auto [host, port] = split_host_port(text, "");
    if (port.empty()) {
        if (text.find(':') == std::string::npos) {
            port = text;
            host.clear();
        } else {
            throw Error("invalid listen address: " + text);
        }
    }
    try {
        auto p = std::stoul(port);
        if (p > 65535) throw Error("invalid listen port: " + port);
        cfg.listen_port = static_cast<std::uint16_t>(p);
    } catch (const std::logic_error&) {
        throw Error("invalid listen port: " + port);
    }
    cfg.listen_host = host.empty() ? "127.0.0.1" : host;
}

struct Recorder::Impl {
    ProxyConfig cfg;
    int listen_fd = -1;
    std::uint16_t port = 0;
    std::thread acceptor;
    std::atomic<bool> running{false};
    std::atomic<bool> log_failed{false};

    std::mutex stop_mu;
    mutable std::mutex mu;  // stats, active set, log
    std::condition_variable cv;
    std::set<int> active;
    std::size_t workers = 0;
    RecorderStats stats;
    std::ofstream log;

    void append(const nlohmann::ordered_json& rec) {
        std::lock_guard lock(mu);
        log << rec.dump() << '\n';
        log.flush();
        if (!log) {
            log_failed = true;
            running = false;
            cv.notify_all();
            return;
        }
        ++stats.recorded;
    }

    void add_body(nlohmann::ordered_json& rec, const std::string& key, const std::string& body) {
        if (body.empty()) {
            rec[key + "_b64"] = nullptr;
            return;
        }
        if (body.size() > cfg.max_body_capture) {
            rec[key + "_b64"] = base64_encode(std::string_view(body).substr(0, cfg.max_body_capture));
            rec[key + "_truncated"] = body.size();
        } else {
            rec[key + "_b64"] = base64_encode(body);
        }
    }

    void tunnel(int cfd, const std::string& target, Reader& in) {
        auto [host, port] = split_host_port(target, "443");
        int ufd = connect_tcp(host, port);
        if (ufd < 0) {
            {
                std::lock_guard lock(mu);
                ++stats.upstream_failures;
            }
            simple_response(cfd, 502, "Bad Gateway");
            return;
        }
        {
            std::lock_guard lock(mu);
            ++stats.skipped_tunnels;
        }
        bool ok = send_all(cfd, "HTTP/1.1 200 Connection Established\r\n\r\n");
        auto pending = in.take_buffer();
        if (ok && !pending.empty()) ok = send_all(ufd, pending);
        pollfd fds[2] = {{cfd, POLLIN, 0}, {ufd, POLLIN, 0}};
        char buf[16384];
        while (ok && running) {
            int n = ::poll(fds, 2, 200);
            if (n < 0 && errno != EINTR) break;
            if (n <= 0) continue;
            for (int i = 0; i < 2 && ok; ++i) {
                if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                ssize_t got = ::recv(fds[i].fd, buf, sizeof buf, 0);
                if (got <= 0) {
                    ok = false;
                    break;
                }
                ok = send_all(fds[1 - i].fd, std::string_view(buf, static_cast<std::size_t>(got)));
            }
        }
        ::close(ufd);
    }

    // Returns false when the client connection must be closed.
    bool exchange(int cfd, Reader& in) {
        auto head_text = in.read_head();
        if (!head_text) return false;
        auto head = parse_head(*head_text);
        std::istringstream rl(head.start_line);
        std::string method, target, version;
        rl >> method >> target >> version;
        if (method.empty() || target.empty() || !version.starts_with("HTTP/1.")) {
            simple_response(cfd, 400, "Bad Request");
            return false;
        }
        if (method == "CONNECT") {
            tunnel(cfd, target, in);
            return false;
        }
        std::string body;
        if (!read_body(in, head.headers, body, false)) {
            simple_response(cfd, 400, "Bad Request");
            return false;
        }

        std::string origin;
        std::string path;
        if (cfg.upstream) {
            origin = *cfg.upstream;
            while (origin.ends_with('/')) origin.pop_back();
            path = target;
        } else if (target.starts_with("http://")) {
            try {
                auto u = parse_url(target);
                origin = u.origin();
                path = (u.path.empty() ? "/" : u.path) + (u.query ? "?" + *u.query : std::string{});
            } catch (const Error&) {
                simple_response(cfd, 400, "Bad Request");
                return false;
            }
        } else {
            simple_response(cfd, 400, "Bad Request");
            return false;
        }
        const auto authority = origin.substr(origin.find("://") + 3);
        auto [host, port] = split_host_port(authority, "80");

        const bool client_close = has_token(head.headers, "Connection", "close") ||
                                  (version == "HTTP/1.0" && !has_token(head.headers, "Connection", "keep-alive"));

        Headers fwd = strip_hop_by_hop(head.headers);
        fwd.erase(std::remove_if(fwd.begin(), fwd.end(),
                                 [](const auto& kv) { return iequals(kv.first, "Host") || iequals(kv.first, "Content-Length"); }),
                  fwd.end());
        Headers sent{{"Host", authority}};
        sent.insert(sent.end(), fwd.begin(), fwd.end());
        const bool had_body_framing = find_header(head.headers, "Content-Length") ||
                                      has_token(head.headers, "Transfer-Encoding", "chunked");
        if (had_body_framing) sent.emplace_back("Content-Length", std::to_string(body.size()));

        std::string request = method + " " + path + " HTTP/1.1\r\n" + serialize_headers(sent) + "Connection: close\r\n\r\n" + body;

        int ufd = connect_tcp(host, port);
        if (ufd < 0 || !send_all(ufd, request)) {
            if (ufd >= 0) ::close(ufd);
            {
                std::lock_guard lock(mu);
                ++stats.upstream_failures;
            }
            simple_response(cfd, 502, "Bad Gateway");
            return false;
        }
        Reader ur(ufd);
        Head rhead;
        int status = 0;
        for (;;) {
            auto rtext = ur.read_head();
            if (!rtext) break;
            rhead = parse_head(*rtext);
            std::istringstream sl(rhead.start_line);
            std::string v;
            sl >> v >> status;
            if (status < 100 || status >= 200) break;
        }
        std::string rbody;
        const bool no_body = method == "HEAD" || status == 204 || status == 304;
        const bool body_ok = status >= 200 && (no_body || read_body(ur, rhead.headers, rbody, true));
        ::close(ufd);
        if (!body_ok) {
            {
                std::lock_guard lock(mu);
                ++stats.upstream_failures;
            }
            simple_response(cfd, 502, "Bad Gateway");
            return false;
        }

        Headers back = strip_hop_by_hop(rhead.headers);
        if (!no_body) {
            back.erase(std::remove_if(back.begin(), back.end(),
                                      [](const auto& kv) { return iequals(kv.first, "Content-Length"); }),
                       back.end());
            back.emplace_back("Content-Length", std::to_string(rbody.size()));
        }
        std::string response = rhead.start_line + "\r\n" + serialize_headers(back) +
                               (client_close ? "Connection: close\r\n" : "") + "\r\n" + rbody;
        // Logged before the client sees the response, so a client that waits
        // for each answer always finds its exchanges in order.
        nlohmann::ordered_json rec;
        rec["ts"] = format_rfc3339(std::chrono::system_clock::now());
        rec["method"] = method;
        rec["url"] = origin + path;
        rec["req_headers"] = header_pairs(sent);
        add_body(rec, "req_body", body);
        rec["status"] = status;
        rec["resp_headers"] = header_pairs(back);
        add_body(rec, "resp_body", rbody);
        auto ct = find_header(back, "Content-Type");
        rec["resp_mime"] = ct ? nlohmann::ordered_json(canonical_mime(*ct)) : nlohmann::ordered_json(nullptr);
        append(rec);
        const bool delivered = send_all(cfd, response);
        return delivered && !client_close;
    }

    void serve_client(int cfd) {
        Reader in(cfd);
        while (running && exchange(cfd, in)) {
        }
        std::lock_guard lock(mu);
        active.erase(cfd);
        ::close(cfd);
        --workers;
        cv.notify_all();
    }

    void accept_loop() {
        while (running) {
            pollfd p{listen_fd, POLLIN, 0};
            int n = ::poll(&p, 1, 100);
            if (n <= 0) continue;
            int cfd = ::accept(listen_fd, nullptr, nullptr);
            if (cfd < 0) continue;
            set_timeouts(cfd);
            std::lock_guard lock(mu);
            if (!running) {
                ::close(cfd);
                break;
            }
            active.insert(cfd);
            ++workers;
            std::thread([this, cfd] { serve_client(cfd); }).detach();
        }
    }
};

Recorder::Recorder(ProxyConfig cfg) : impl_(std::make_unique<Impl>()) {
    if (cfg.max_body_capture == 0) throw Error("max_body_capture must be positive");
    impl_->cfg = std::move(cfg);
    impl_->log.open(impl_->cfg.log_path, std::ios::app | std::ios::binary);
    if (!impl_->log) throw Error("cannot open log " + impl_->cfg.log_path.string());
}

Recorder::~Recorder() { stop(); }

std::uint16_t Recorder::start() {
    auto& im = *impl_;
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const auto port = std::to_string(im.cfg.listen_port);
    if (getaddrinfo(im.cfg.listen_host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw Error("cannot resolve listen address " + im.cfg.listen_host);
    }
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    int one = 1;
    if (fd >= 0) setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (fd < 0 || ::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
        freeaddrinfo(res);
        if (fd >= 0) ::close(fd);
        throw Error("cannot listen on " + im.cfg.listen_host + ":" + port + ": " + std::strerror(errno));
    }
    freeaddrinfo(res);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    im.port = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                               : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    im.listen_fd = fd;
    im.running = true;
    im.acceptor = std::thread([&im] { im.accept_loop(); });
    return im.port;
}

void Recorder::stop() {
    auto& im = *impl_;
    std::lock_guard stop_lock(im.stop_mu);
    {
        std::lock_guard lock(im.mu);
        im.running = false;
        for (int fd : im.active) ::shutdown(fd, SHUT_RDWR);
        im.cv.notify_all();
    }
    if (im.acceptor.joinable()) im.acceptor.join();
    std::unique_lock lock(im.mu);
    im.cv.wait(lock, [&] { return im.workers == 0; });
    if (im.listen_fd >= 0) {
        ::close(im.listen_fd);
        im.listen_fd = -1;
    }
}

void Recorder::wait() {
    std::unique_lock lock(impl_->mu);
    impl_->cv.wait(lock, [&] { return !impl_->running.load(); });
}

std::uint16_t Recorder::port() const { return impl_->port; }

RecorderStats Recorder::stats() const {
    std::lock_guard lock(impl_->mu);
    return impl_->stats;
}

bool Recorder::log_failed() const { return impl_->log_failed; }

}  // namespace carver::recorder
