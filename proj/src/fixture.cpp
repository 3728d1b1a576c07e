#include "carver/fixture.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "carver/error.hpp"
#include "carver/model.hpp"

namespace carver::fixture {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kApiPrefix = "/api";

struct User {
    int id;
    std::string role;
    std::string bio;
    std::vector<std::string> followers;
};

struct Comment {
    int id;
    std::string author;
    std::string body;
};

struct Article {
    int id;
    std::string title;
    std::string author;
    std::vector<Comment> comments;
};

struct Tag {
    int id;
    std::string name;
    std::string author;
};

struct State {
    std::map<std::string, User> users;
    std::map<int, Article> articles;
    std::vector<Tag> tags;
    std::map<std::string, std::string> sessions;  // token -> user
    int next_article = 3;
    int next_session = 1;

    static State seed() {
        State s;
        s.users["user1"] = {1, "user", "Writes about APIs", {"user2"}};
        s.users["user2"] = {2, "user", "Reads a lot", {}};
        s.articles[1] = {1, "Carving tests", "user1", {{1, "user2", "Nice write-up"}}};
        s.articles[2] = {2, "Probing endpoints", "user2", {{2, "user1", "Thanks"}}};
        s.tags = {{1, "tag1", "user1"}, {2, "tag2", "user1"}};
        return s;
    }
};

enum class Route { UserList, Login, User, UserInfo, UserFollow, ArticleList, Article, ArticleComments, TagList, Tag };

struct Match {
    Route route;
    std::vector<std::string> args;
};

std::optional<Match> route_of(const std::vector<std::string>& s) {
    if (s.empty()) return std::nullopt;
    if (s[0] == "users") {
        if (s.size() == 1) return Match{Route::UserList, {}};
        if (s.size() == 2 && s[1] == "login") return Match{Route::Login, {}};
        if (s.size() == 2) return Match{Route::User, {s[1]}};
        if (s.size() == 3 && s[2] == "info") return Match{Route::UserInfo, {s[1]}};
        if (s.size() == 3 && s[2] == "follow") return Match{Route::UserFollow, {s[1]}};
    } else if (s[0] == "articles") {
        if (s.size() == 1) return Match{Route::ArticleList, {}};
        if (s.size() == 2) return Match{Route::Article, {s[1]}};
        if (s.size() == 3 && s[2] == "comments") return Match{Route::ArticleComments, {s[1]}};
    } else if (s[0] == "tags") {
        if (s.size() == 1) return Match{Route::TagList, {}};
        if (s.size() == 2) return Match{Route::Tag, {s[1]}};
    }
    return std::nullopt;
}

std::vector<std::string> allowed(Route r) {
    switch (r) {
        case Route::Login: return {"POST"};
        case Route::UserFollow:
        case Route::ArticleList: return {"GET", "POST"};
        default: return {"GET"};
    }
}

std::optional<int> numeric_id(const std::string& s) {
    if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return std::nullopt;
    }
    return std::stoi(s);
}

ordered_json comment_json(const Comment& c) { return {{"id", c.id}, {"author", c.author}, {"body", c.body}}; }

std::optional<std::string> session_user(const State& st, const httplib::Request& req) {
    if (!req.has_header("Cookie")) return std::nullopt;
    const auto cookie = req.get_header_value("Cookie");
    std::size_t pos = 0;
    while (pos < cookie.size()) {
        auto semi = cookie.find(';', pos);
        if (semi == std::string::npos) semi = cookie.size();
        auto part = trim(std::string_view(cookie).substr(pos, semi - pos));
        if (part.starts_with("session=")) {
            auto it = st.sessions.find(part.substr(8));
            if (it != st.sessions.end()) return it->second;
        }
        pos = semi + 1;
    }
    return std::nullopt;
}

}  // namespace

struct FixtureServer::Impl {
    httplib::Server server;
    std::thread thread;
    std::mutex mu;
    State state = State::seed();
    std::string host = "127.0.0.1";
    int port = 0;

    void send_json(httplib::Response& res, int status, const ordered_json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void not_found(httplib::Response& res) { send_json(res, 404, {{"error", "not found"}}); }

    void handle(const std::string& method, const httplib::Request& req, httplib::Response& res) {
        if (req.path == "/__reset") {
            if (method != "POST") {
                send_json(res, 405, {{"error", "method not allowed"}});
                return;
            }
            std::lock_guard lock(mu);
            state = State::seed();
            res.status = 204;
            return;
        }
        if (!req.path.starts_with(kApiPrefix) ||
            (req.path.size() > kApiPrefix.size() && req.path[kApiPrefix.size()] != '/')) {
            not_found(res);
            return;
        }
        std::vector<std::string> segs;
        try {
            segs = parse_path(req.path.substr(kApiPrefix.size()));
        } catch (const Error&) {
            not_found(res);
            return;
        }
        auto m = route_of(segs);
        if (!m) {
            not_found(res);
            return;
        }
        const auto verbs = allowed(m->route);
        if (method == "OPTIONS") {
            std::string allow;
            for (const auto& v : verbs) allow += v + ", ";
            allow += "OPTIONS";
            res.status = 200;
            res.set_header("Allow", allow);
            return;
        }
        if (std::find(verbs.begin(), verbs.end(), method) == verbs.end()) {
            send_json(res, 405, {{"error", "method not allowed"}});
            return;
        }
        std::lock_guard lock(mu);
        dispatch(method, *m, req, res);
    }

    void dispatch(const std::string& method, const Match& m, const httplib::Request& req, httplib::Response& res) {
        auto& st = state;
        switch (m.route) {
            case Route::UserList: {
                ordered_json arr = ordered_json::array();
                for (const auto& [name, u] : st.users) arr.push_back({{"id", u.id}, {"name", name}, {"role", u.role}});
                send_json(res, 200, arr);
                return;
            }
            case Route::Login: {
                json body = json::parse(req.body, nullptr, false);
                std::string name = body.is_object() ? body.value("username", "") : "";
                if (!st.users.contains(name)) {
                    send_json(res, 401, {{"error", "unknown user"}});
                    return;
                }
                std::string token = "s" + std::to_string(st.next_session++) + "-" + name;
                st.sessions[token] = name;
                res.set_header("Set-Cookie", "session=" + token + "; Path=/; HttpOnly");
                send_json(res, 200, {{"user", name}});
                return;
            }
            case Route::User:
            case Route::UserInfo:
            case Route::UserFollow: {
                auto it = st.users.find(m.args[0]);
                if (it == st.users.end()) {
                    not_found(res);
                    return;
                }
                auto& u = it->second;
                if (m.route == Route::User) {
                    send_json(res, 200, {{"id", u.id}, {"name", it->first}, {"bio", u.bio},
                                         {"followers", u.followers.size()}});
                } else if (m.route == Route::UserInfo) {
                    send_json(res, 200, {{"id", u.id}, {"name", it->first}, {"role", u.role}});
                } else {
                    if (method == "POST") {
                        auto who = session_user(st, req).value_or("anonymous");
                        if (std::find(u.followers.begin(), u.followers.end(), who) == u.followers.end()) {
                            u.followers.push_back(who);
                        }
                    }
                    send_json(res, 200, {{"name", it->first}, {"followers", u.followers}});
                }
                return;
            }
            case Route::ArticleList: {
                if (method == "POST") {
                    json body = json::parse(req.body, nullptr, false);
                    if (!body.is_object() || !body.contains("title") || !body["title"].is_string()) {
                        send_json(res, 422, {{"error", "title required"}});
                        return;
                    }
                    Article a{st.next_article++, body["title"].get<std::string>(),
                              session_user(st, req).value_or("anonymous"), {}};
                    st.articles[a.id] = a;
                    send_json(res, 201, {{"id", a.id}, {"title", a.title}, {"author", a.author},
                                         {"comments", ordered_json::array()}});
                    return;
                }
                ordered_json arr = ordered_json::array();
                for (const auto& [id, a] : st.articles) {
                    arr.push_back({{"id", id}, {"title", a.title}, {"author", a.author}, {"comments", a.comments.size()}});
                }
                send_json(res, 200, arr);
                return;
            }
            case Route::Article:
            case Route::ArticleComments: {
                auto id = numeric_id(m.args[0]);
                auto it = id ? st.articles.find(*id) : st.articles.end();
                if (it == st.articles.end()) {
                    not_found(res);
                    return;
                }
                ordered_json comments = ordered_json::array();
                for (const auto& c : it->second.comments) comments.push_back(comment_json(c));
                if (m.route == Route::ArticleComments) {
                    send_json(res, 200, comments);
                } else {
                    const auto& a = it->second;
                    send_json(res, 200, {{"id", a.id}, {"title", a.title}, {"author", a.author}, {"comments", comments}});
                }
                return;
            }
            case Route::TagList: {
                ordered_json arr = ordered_json::array();
                for (const auto& t : st.tags) arr.push_back({{"id", t.id}, {"name", t.name}, {"author", t.author}});
                send_json(res, 200, arr);
                return;
            }
            case Route::Tag: {
                auto id = numeric_id(m.args[0]);
                auto it = std::find_if(st.tags.begin(), st.tags.end(), [&](const Tag& t) { return id && t.id == *id; });
                if (it == st.tags.end()) {
                    not_found(res);
                    return;
                }
                send_json(res, 200, {{"id", it->id}, {"name", it->name}, {"author", it->author}});
                return;
            }
        }
    }

    void install() {
        auto bind = [this](const char* method) {
            // HEAD arrives through the GET handlers.
            return [this, method](const httplib::Request& req, httplib::Response& res) { handle(method, req, res); };
        };
        server.Get(".*", bind("GET"));
        server.Post(".*", bind("POST"));
        server.Put(".*", bind("PUT"));
        server.Patch(".*", bind("PATCH"));
        server.Delete(".*", bind("DELETE"));
        server.Options(".*", bind("OPTIONS"));
    }
};

FixtureServer::FixtureServer() : impl_(std::make_unique<Impl>()) { impl_->install(); }

FixtureServer::~FixtureServer() { stop(); }

int FixtureServer::start(const std::string& host, int port) {
    impl_->host = host;
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
    } else {
        impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (impl_->port <= 0) throw Error("fixture: cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void FixtureServer::serve(const std::string& host, int port) {
    start(host, port);
    if (impl_->thread.joinable()) impl_->thread.join();
}

void FixtureServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

int FixtureServer::port() const { return impl_->port; }

std::string FixtureServer::root_url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

std::string FixtureServer::base_url() const { return root_url() + std::string(kApiPrefix); }

std::string FixtureServer::reset_url() const { return root_url() + "/__reset"; }

void FixtureServer::reset() {
    std::lock_guard lock(impl_->mu);
    impl_->state = State::seed();
}

}  // namespace carver::fixture
