#pragma once

// Recording HTTP/1.1 proxy. Forward mode takes absolute-form request targets;
// with an upstream origin configured it acts as a reverse proxy. Every
// completed exchange is appended to a JSONL log readable by ingest.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace carver::recorder {

struct ProxyConfig {
    std::string listen_host = "127.0.0.1";
    std::uint16_t listen_port = 0;  // 0 picks a free port
    std::optional<std::string> upstream;  // "http://host:port"
    std::filesystem::path log_path;
    std::size_t max_body_capture = 1 << 20;
};

// Parses "host:port" (host defaults to 127.0.0.1). Throws Error.
void parse_listen(const std::string& text, ProxyConfig& cfg);

struct RecorderStats {
    std::size_t recorded = 0;
    std::size_t skipped_tunnels = 0;
    std::size_t upstream_failures = 0;
};

class Recorder {
public:
    // Throws Error when max_body_capture is 0 or the log cannot be opened.
    explicit Recorder(ProxyConfig cfg);
    ~Recorder();
    Recorder(const Recorder&) = delete;
    Recorder& operator=(const Recorder&) = delete;

    // Binds and accepts on a background thread; returns the bound port.
    std::uint16_t start();
    void stop();
    // Blocks until stop() or a log write failure.
    void wait();

    std::uint16_t port() const;
    RecorderStats stats() const;
    // Set once a log append failed; the proxy stops accepting.
    bool log_failed() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace carver::recorder
