#pragma once

// Deterministic in-process REST service (users, articles, tags) used by the
// end-to-end tests. API routes live under /api; POST /__reset re-seeds state.

#include <memory>
#include <string>
#include <string_view>

namespace carver::fixture {

// Hand-written OpenAPI document describing the documented routes.
std::string_view ground_truth_yaml();

class FixtureServer {
public:
    FixtureServer();
    ~FixtureServer();
    FixtureServer(const FixtureServer&) = delete;
    FixtureServer& operator=(const FixtureServer&) = delete;

    // Binds (port 0 picks a free one) and serves on a background thread.
    // Returns the bound port; throws Error when binding fails.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Blocks until stop() is called from another thread.
    void serve(const std::string& host, int port);
    void stop();

    int port() const;
    std::string root_url() const;   // http://host:port
    std::string base_url() const;   // root_url() + "/api"
    std::string reset_url() const;  // root_url() + "/__reset"

    void reset();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace carver::fixture
