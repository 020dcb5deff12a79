#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "miniflow/task.hpp"

namespace miniflow {

// ---------------------------------------------------------------- messages

struct PutTask {
    TaskDescriptor task;
};
struct GetRequest {
    std::int32_t work_type = -1;
    std::int32_t worker = 0;
};
struct TaskAssign {
    TaskDescriptor task;
};
struct Complete {
    TaskId task = 0;
    std::int32_t worker = 0;
    std::vector<std::pair<FutureId, Value>> outputs;
    std::optional<std::string> error;  // leaf failure diagnostic
    std::int64_t start_us = 0;         // steady clock, microseconds
    std::int64_t end_us = 0;
};
struct ShutdownSignal {};
struct RegisterWorker {
    std::int32_t worker = 0;  // kEngineId for the engine
    std::vector<std::int32_t> work_types;
};
struct Quiesce {};

/// Alternative index + 1 is the frame tag.
using WireMessage =
    std::variant<PutTask, GetRequest, TaskAssign, Complete, ShutdownSignal, RegisterWorker, Quiesce>;

inline constexpr std::int32_t kEngineId = -1;
inline constexpr std::uint32_t kMaxFrame = 1u << 30;

std::string_view message_name(const WireMessage& m) noexcept;

/// 4-byte little-endian length of the rest, tag byte, body.
std::vector<std::uint8_t> encode(const WireMessage& m);
/// Takes one whole frame. Throws DecodeError on truncation, an unknown tag,
/// a length mismatch or trailing bytes.
WireMessage decode(std::span<const std::uint8_t> frame);

bool identical(const WireMessage& a, const WireMessage& b) noexcept;

std::int64_t steady_now_us();

// ---------------------------------------------------------------- queues

template <typename T>
class BlockingQueue {
public:
    void push(T v) {
        {
            std::lock_guard lk(mu_);
            q_.push_back(std::move(v));
        }
        cv_.notify_one();
    }

    /// nullopt once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return !q_.empty() || closed_; });
        if (q_.empty()) return std::nullopt;
        T v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

    void close() {
        {
            std::lock_guard lk(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> q_;
    bool closed_ = false;
};

// ---------------------------------------------------------------- endpoints

/// A client's connection to the server. send() is safe from several threads;
/// recv() has a single caller.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual void send(const WireMessage& m) = 0;
    /// Throws TransportError when the server went away.
    virtual WireMessage recv() = 0;
    virtual void close() = 0;
};

/// One message delivered to the server; `msg` is empty when the connection
/// closed, with `error` describing an abnormal close.
struct Incoming {
    std::size_t conn = 0;
    std::optional<WireMessage> msg;
    std::string error;
};

/// The server side of the star: every client connection feeds one inbox.
class Hub {
public:
    virtual ~Hub() = default;
    virtual Incoming recv() = 0;
    virtual void send(std::size_t conn, const WireMessage& m) = 0;
    virtual std::size_t connections() const = 0;
    virtual void close() = 0;
};

/// Queues inside one process. Messages are passed as values.
class InProcNetwork {
public:
    InProcNetwork();
    ~InProcNetwork();

    std::unique_ptr<Endpoint> connect();
    Hub& hub();

    struct State;

private:
    std::shared_ptr<State> state_;
    std::unique_ptr<Hub> hub_;
};

struct Address {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

/// "host:port" or ":port" or "port". Throws Error on junk.
Address parse_address(std::string_view s);

/// Listening TCP socket. Created before worker processes fork so children can
/// connect to the chosen port.
class TcpListener {
public:
    explicit TcpListener(const Address& addr);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    /// Closes the listening socket in a forked child.
    void close();

    /// Accepts exactly `n` clients, then serves them. Throws TransportError
    /// when fewer arrive within the timeout.
    std::unique_ptr<Hub> accept(std::size_t n, int timeout_ms = 30000);

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

std::unique_ptr<Endpoint> tcp_connect(const Address& addr, int timeout_ms = 30000);

}  // namespace miniflow
