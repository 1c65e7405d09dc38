#pragma once

// Newline-delimited JSON serving over TCP.
//
// Request:  {"signals":[{"kind":"query","id":3}],"n":10}
// Response: {"results":[{"ad_id":7,"score":0.12,"ocpc_price":0.1}]}
// Failure:  {"error":"signals[0].kind: unknown signal kind 'x'"}

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adret/retrieval.hpp"

namespace adret::serve {

inline constexpr std::size_t kDefaultResults = 10;
inline constexpr std::size_t kMaxLineBytes = 1 << 20;

/// Throws ParseError whose message starts with the offending field.
retrieval::RetrievalRequest parse_request_line(std::string_view line, std::size_t default_n = kDefaultResults);

std::string format_response(std::span<const retrieval::RetrievalResult> results);
std::string format_error(std::string_view message);

/// Never throws; failures become an error line.
std::string handle_line(std::string_view line, const retrieval::SnapshotHolder& holder);

/// Thread-per-connection line server. Binds in the constructor.
class LineServer {
public:
    using Handler = std::function<std::string(std::string_view)>;

    LineServer(Handler handler, const std::string& host = "127.0.0.1", std::uint16_t port = 0);
    ~LineServer();
    LineServer(const LineServer&) = delete;
    LineServer& operator=(const LineServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }

    /// Accepts until `stop()` is called or `keep_running` returns false.
    /// `on_tick` runs between accepts, roughly every 200 ms.
    void run(const std::function<bool()>& keep_running = {}, const std::function<void()>& on_tick = {});
    void stop() noexcept { stopping_ = true; }

private:
    void serve_connection(int fd);

    Handler handler_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex clients_mutex_;
    std::set<int> clients_;
    std::vector<std::thread> threads_;
};

}  // namespace adret::serve
