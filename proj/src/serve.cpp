#include "adret/serve.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "adret/error.hpp"
#include "json.hpp"

namespace adret::serve {

using nlohmann::json;

retrieval::RetrievalRequest parse_request_line(std::string_view line, std::size_t default_n)
{
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception&) {
        throw ParseError(0, "request: not valid JSON");
    }
    if (!j.is_object()) {
        throw ParseError(0, "request: expected a JSON object");
    }
    retrieval::RetrievalRequest req;
    req.n = default_n;
    bool have_signals = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "n") {
            if (!value.is_number_unsigned()) {
                throw ParseError(0, "n: expected a positive integer");
            }
            req.n = value.get<std::size_t>();
        } else if (key == "signals") {
            if (!value.is_array()) {
                throw ParseError(0, "signals: expected an array");
            }
            have_signals = true;
            for (std::size_t i = 0; i < value.size(); ++i) {
                const auto& s = value[i];
                const std::string at = "signals[" + std::to_string(i) + "]";
                if (!s.is_object()) {
                    throw ParseError(0, at + ": expected an object");
                }
                for (const auto& [f, _] : s.items()) {
                    if (f != "kind" && f != "id") {
                        throw ParseError(0, at + ": unknown field '" + f + "'");
                    }
                }
                if (!s.contains("kind") || !s["kind"].is_string()) {
                    throw ParseError(0, at + ".kind: expected a string");
                }
                const auto name = s["kind"].get<std::string>();
                const auto kind = signal_kind_from_string(name);
                if (!kind) {
                    throw ParseError(0, at + ".kind: unknown signal kind '" + name + "'");
                }
                if (!s.contains("id") || !s["id"].is_number_unsigned()) {
                    throw ParseError(0, at + ".id: expected a non-negative integer");
                }
                req.signals.push_back({*kind, s["id"].get<EntityId>()});
            }
        } else {
            throw ParseError(0, "unknown field '" + key + "'");
        }
    }
    if (!have_signals) {
        throw ParseError(0, "signals: missing");
    }
    return req;
}

std::string format_response(std::span<const retrieval::RetrievalResult> results)
{
    json arr = json::array();
    for (const auto& r : results) {
        arr.push_back({{"ad_id", r.ad_id}, {"score", r.score}, {"ocpc_price", r.ocpc_price}});
    }
    return json{{"results", std::move(arr)}}.dump();
}

std::string format_error(std::string_view message)
{
    return json{{"error", message}}.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string handle_line(std::string_view line, const retrieval::SnapshotHolder& holder)
{
    try {
        const auto snapshot = holder.get();
        if (!snapshot) {
            return format_error("no snapshot loaded");
        }
        const auto req = parse_request_line(line, std::min(kDefaultResults, snapshot->config.max_results));
        return format_response(snapshot->retrieve(req));
    } catch (const std::exception& e) {
        return format_error(e.what());
    }
}

LineServer::LineServer(Handler handler, const std::string& host, std::uint16_t port)
    : handler_(std::move(handler))
{
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw Error(std::string("socket: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw ConfigError("invalid IPv4 host '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

LineServer::~LineServer()
{
    stopping_ = true;
    {
        std::lock_guard lock(clients_mutex_);
        for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : threads_) {
        if (t.joinable()) t.join();
    }
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void LineServer::run(const std::function<bool()>& keep_running, const std::function<void()>& on_tick)
{
    while (!stopping_ && (!keep_running || keep_running())) {
        if (on_tick) on_tick();
        pollfd p{listen_fd_, POLLIN, 0};
        const int ready = ::poll(&p, 1, 200);
        if (ready <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        {
            std::lock_guard lock(clients_mutex_);
            clients_.insert(fd);
        }
        threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
    std::lock_guard lock(clients_mutex_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
}

void LineServer::serve_connection(int fd)
{
    auto send_all = [fd](const std::string& s) {
        std::size_t sent = 0;
        while (sent < s.size()) {
            const auto n = ::send(fd, s.data() + sent, s.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<std::size_t>(n);
        }
        return true;
    };
    std::string buffer;
    char chunk[4096];
    bool open = true;
    while (open && !stopping_) {
        const auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0, nl;
        while (open && (nl = buffer.find('\n', start)) != std::string::npos) {
            std::string_view line(buffer.data() + start, nl - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            start = nl + 1;
            if (line.empty()) continue;
            open = send_all(handler_(line) + "\n");
        }
        buffer.erase(0, start);
        if (buffer.size() > kMaxLineBytes) {
            send_all(format_error("request line too long") + "\n");
            break;
        }
    }
    {
        std::lock_guard lock(clients_mutex_);
        clients_.erase(fd);
    }
    ::close(fd);
}

}  // namespace adret::serve
