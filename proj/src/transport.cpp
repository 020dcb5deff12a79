#include "miniflow/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>

#include "miniflow/bytes.hpp"
#include "miniflow/errors.hpp"

namespace miniflow {

std::string_view message_name(const WireMessage& m) noexcept {
    static constexpr std::string_view names[] = {"PutTask",        "GetRequest",     "TaskAssign",
                                                 "Complete",       "ShutdownSignal", "RegisterWorker",
                                                 "Quiesce"};
    return names[m.index()];
}

std::int64_t steady_now_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------- codec

namespace {

void put_task(std::vector<std::uint8_t>& out, const TaskDescriptor& t) {
    le::put<std::int64_t>(out, t.id);
    le::put<std::int32_t>(out, t.work_type);
    le::put<std::int64_t>(out, t.priority);
    le::put<std::uint8_t>(out, t.target ? 1 : 0);
    if (t.target) le::put<std::int32_t>(out, *t.target);
    le::put_string(out, t.binding);
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.inputs.size()));
    for (const auto& v : t.inputs) encode_value(v, out);
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.outputs.size()));
    for (auto f : t.outputs) le::put<std::uint32_t>(out, f.value);
}

std::uint32_t get_count(std::span<const std::uint8_t> in, std::size_t& pos, std::size_t min_each) {
    const auto n = le::get<std::uint32_t>(in, pos);
    // Reject counts the remaining bytes cannot possibly hold before allocating.
    if (min_each && static_cast<std::uint64_t>(n) * min_each > in.size() - pos) {
        throw DecodeError("truncated input: count " + std::to_string(n) + " exceeds frame");
    }
    return n;
}

TaskDescriptor get_task(std::span<const std::uint8_t> in, std::size_t& pos) {
    TaskDescriptor t;
    t.id = le::get<std::int64_t>(in, pos);
    t.work_type = le::get<std::int32_t>(in, pos);
    t.priority = le::get<std::int64_t>(in, pos);
    const auto has_target = le::get<std::uint8_t>(in, pos);
    if (has_target > 1) throw DecodeError("bad target flag " + std::to_string(has_target));
    if (has_target) t.target = le::get<std::int32_t>(in, pos);
    t.binding = le::get_string(in, pos);
    const auto n_in = get_count(in, pos, 1);
    t.inputs.reserve(n_in);
    for (std::uint32_t i = 0; i < n_in; ++i) t.inputs.push_back(decode_value(in, pos));
    const auto n_out = get_count(in, pos, 4);
    t.outputs.reserve(n_out);
    for (std::uint32_t i = 0; i < n_out; ++i) t.outputs.push_back({le::get<std::uint32_t>(in, pos)});
    return t;
}

void put_body(std::vector<std::uint8_t>& out, const PutTask& m) { put_task(out, m.task); }
void put_body(std::vector<std::uint8_t>& out, const TaskAssign& m) { put_task(out, m.task); }
void put_body(std::vector<std::uint8_t>& out, const GetRequest& m) {
    le::put<std::int32_t>(out, m.work_type);
    le::put<std::int32_t>(out, m.worker);
}
void put_body(std::vector<std::uint8_t>& out, const Complete& m) {
    le::put<std::int64_t>(out, m.task);
    le::put<std::int32_t>(out, m.worker);
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.outputs.size()));
    for (const auto& [f, v] : m.outputs) {
        le::put<std::uint32_t>(out, f.value);
        encode_value(v, out);
    }
    le::put<std::uint8_t>(out, m.error ? 1 : 0);
    if (m.error) le::put_string(out, *m.error);
    le::put<std::int64_t>(out, m.start_us);
    le::put<std::int64_t>(out, m.end_us);
}
void put_body(std::vector<std::uint8_t>&, const ShutdownSignal&) {}
void put_body(std::vector<std::uint8_t>& out, const RegisterWorker& m) {
    le::put<std::int32_t>(out, m.worker);
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.work_types.size()));
    for (auto t : m.work_types) le::put<std::int32_t>(out, t);
}
void put_body(std::vector<std::uint8_t>&, const Quiesce&) {}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& m) {
    std::vector<std::uint8_t> out(4, 0);
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.index() + 1));
    std::visit([&](const auto& x) { put_body(out, x); }, m);
    const std::size_t len = out.size() - 4;
    if (len > kMaxFrame) throw TransportError("message of " + std::to_string(len) + " bytes exceeds frame limit");
    for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(len >> (8 * i));
    return out;
}

WireMessage decode(std::span<const std::uint8_t> frame) {
    std::size_t pos = 0;
    const auto len = le::get<std::uint32_t>(frame, pos);
    if (len < 1) throw DecodeError("empty frame");
    if (frame.size() - 4 < len) {
        throw DecodeError("truncated frame: header says " + std::to_string(len) + " bytes, have " +
                          std::to_string(frame.size() - 4));
    }
    if (frame.size() - 4 > len) throw DecodeError("trailing bytes after frame");
    const auto tag = le::get<std::uint8_t>(frame, pos);
    WireMessage m;
    switch (tag) {
        case 1: m = PutTask{get_task(frame, pos)}; break;
        case 2: {
            GetRequest g;
            g.work_type = le::get<std::int32_t>(frame, pos);
            g.worker = le::get<std::int32_t>(frame, pos);
            m = g;
            break;
        }
        case 3: m = TaskAssign{get_task(frame, pos)}; break;
        case 4: {
            Complete c;
            c.task = le::get<std::int64_t>(frame, pos);
            c.worker = le::get<std::int32_t>(frame, pos);
            const auto n = get_count(frame, pos, 5);
            for (std::uint32_t i = 0; i < n; ++i) {
                FutureId f{le::get<std::uint32_t>(frame, pos)};
                c.outputs.emplace_back(f, decode_value(frame, pos));
            }
            const auto has_err = le::get<std::uint8_t>(frame, pos);
            if (has_err > 1) throw DecodeError("bad error flag " + std::to_string(has_err));
            if (has_err) c.error = le::get_string(frame, pos);
            c.start_us = le::get<std::int64_t>(frame, pos);
            c.end_us = le::get<std::int64_t>(frame, pos);
            m = std::move(c);
            break;
        }
        case 5: m = ShutdownSignal{}; break;
        case 6: {
            RegisterWorker r;
            r.worker = le::get<std::int32_t>(frame, pos);
            const auto n = get_count(frame, pos, 4);
            for (std::uint32_t i = 0; i < n; ++i) r.work_types.push_back(le::get<std::int32_t>(frame, pos));
            m = std::move(r);
            break;
        }
        case 7: m = Quiesce{}; break;
        default: throw DecodeError("unknown message tag " + std::to_string(tag));
    }
    if (pos != frame.size()) throw DecodeError("trailing bytes in " + std::string(message_name(m)) + " body");
    return m;
}

bool identical(const WireMessage& a, const WireMessage& b) noexcept {
    if (a.index() != b.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b);
            if constexpr (std::is_same_v<T, PutTask> || std::is_same_v<T, TaskAssign>) {
                return identical(x.task, y.task);
            } else if constexpr (std::is_same_v<T, GetRequest>) {
                return x.work_type == y.work_type && x.worker == y.worker;
            } else if constexpr (std::is_same_v<T, Complete>) {
                if (x.task != y.task || x.worker != y.worker || x.error != y.error ||
                    x.start_us != y.start_us || x.end_us != y.end_us ||
                    x.outputs.size() != y.outputs.size()) {
                    return false;
                }
                for (std::size_t i = 0; i < x.outputs.size(); ++i) {
                    if (x.outputs[i].first != y.outputs[i].first ||
                        !identical(x.outputs[i].second, y.outputs[i].second)) {
                        return false;
                    }
                }
                return true;
            } else if constexpr (std::is_same_v<T, RegisterWorker>) {
                return x.worker == y.worker && x.work_types == y.work_types;
            } else {
                return true;
            }
        },
        a);
}

// ---------------------------------------------------------------- in-process

struct InProcNetwork::State {
    BlockingQueue<Incoming> inbox;
    std::mutex mu;
    std::vector<std::shared_ptr<BlockingQueue<WireMessage>>> clients;
};

namespace {

class InProcEndpoint final : public Endpoint {
public:
    InProcEndpoint(std::shared_ptr<InProcNetwork::State> s, std::size_t conn,
                   std::shared_ptr<BlockingQueue<WireMessage>> q)
        : s_(std::move(s)), conn_(conn), q_(std::move(q)) {}
    ~InProcEndpoint() override { close(); }

    void send(const WireMessage& m) override {
        if (closed_) throw TransportError("send on closed endpoint");
        s_->inbox.push(Incoming{conn_, m, {}});
    }

    WireMessage recv() override {
        auto m = q_->pop();
        if (!m) throw TransportError("server closed the connection");
        return std::move(*m);
    }

    void close() override {
        if (closed_.exchange(true)) return;
        s_->inbox.push(Incoming{conn_, std::nullopt, {}});
    }

private:
    std::shared_ptr<InProcNetwork::State> s_;
    std::size_t conn_;
    std::shared_ptr<BlockingQueue<WireMessage>> q_;
    std::atomic<bool> closed_{false};
};

class InProcHub final : public Hub {
public:
    explicit InProcHub(std::shared_ptr<InProcNetwork::State> s) : s_(std::move(s)) {}

    Incoming recv() override {
        auto m = s_->inbox.pop();
        if (!m) throw TransportError("hub closed");
        return std::move(*m);
    }

    void send(std::size_t conn, const WireMessage& m) override {
        std::shared_ptr<BlockingQueue<WireMessage>> q;
        {
            std::lock_guard lk(s_->mu);
            if (conn >= s_->clients.size()) throw TransportError("no connection " + std::to_string(conn));
            q = s_->clients[conn];
        }
        q->push(m);
    }

    std::size_t connections() const override {
        std::lock_guard lk(s_->mu);
        return s_->clients.size();
    }

    void close() override {
        std::lock_guard lk(s_->mu);
        for (auto& c : s_->clients) c->close();
    }

private:
    std::shared_ptr<InProcNetwork::State> s_;
};

}  // namespace

InProcNetwork::InProcNetwork()
    : state_(std::make_shared<State>()), hub_(std::make_unique<InProcHub>(state_)) {}

InProcNetwork::~InProcNetwork() { hub_->close(); }

std::unique_ptr<Endpoint> InProcNetwork::connect() {
    auto q = std::make_shared<BlockingQueue<WireMessage>>();
    std::size_t conn;
    {
        std::lock_guard lk(state_->mu);
        conn = state_->clients.size();
        state_->clients.push_back(q);
    }
    return std::make_unique<InProcEndpoint>(state_, conn, std::move(q));
}

Hub& InProcNetwork::hub() { return *hub_; }

// ---------------------------------------------------------------- sockets

Address parse_address(std::string_view s) {
    Address a;
    std::string_view port = s;
    if (auto colon = s.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) a.host = std::string(s.substr(0, colon));
        port = s.substr(colon + 1);
    }
    unsigned v = 0;
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), v);
    if (port.empty() || ec != std::errc{} || p != port.data() + port.size() || v > 65535) {
        throw Error("bad address '" + std::string(s) + "': expected host:port");
    }
    a.port = static_cast<std::uint16_t>(v);
    return a;
}

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
    throw TransportError(what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const Address& a) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(a.port);
    if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) == 1) return sa;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(a.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw TransportError("cannot resolve host '" + a.host + "'");
    }
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return sa;
}

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            sys_fail("send");
        }
        p += w;
        n -= static_cast<std::size_t>(w);
    }
}

// False on a clean EOF before the first byte.
bool read_all(int fd, std::uint8_t* p, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, p + got, n - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            sys_fail("recv");
        }
        if (r == 0) {
            if (got == 0) return false;
            throw TransportError("connection closed mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

// nullopt on a clean close between frames.
std::optional<WireMessage> read_frame(int fd) {
    std::vector<std::uint8_t> frame(4);
    if (!read_all(fd, frame.data(), 4)) return std::nullopt;
    const std::uint32_t len = static_cast<std::uint32_t>(frame[0]) | (static_cast<std::uint32_t>(frame[1]) << 8) |
                              (static_cast<std::uint32_t>(frame[2]) << 16) |
                              (static_cast<std::uint32_t>(frame[3]) << 24);
    if (len > kMaxFrame) throw DecodeError("frame of " + std::to_string(len) + " bytes exceeds limit");
    frame.resize(4 + static_cast<std::size_t>(len));
    if (len && !read_all(fd, frame.data() + 4, len)) throw TransportError("connection closed mid-frame");
    return decode(frame);
}

void tune(int fd) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

class TcpEndpoint final : public Endpoint {
public:
    explicit TcpEndpoint(int fd) : fd_(fd) {}
    ~TcpEndpoint() override {
        close();
    }

    void send(const WireMessage& m) override {
        const auto frame = encode(m);
        std::lock_guard lk(write_mu_);
        if (fd_ < 0) throw TransportError("send on closed endpoint");
        write_all(fd_, frame.data(), frame.size());
    }

    WireMessage recv() override {
        auto m = read_frame(fd_);
        if (!m) throw TransportError("server closed the connection");
        return std::move(*m);
    }

    void close() override {
        std::lock_guard lk(write_mu_);
        if (fd_ < 0) return;
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_;
    std::mutex write_mu_;
};

class TcpHub final : public Hub {
public:
    explicit TcpHub(std::vector<int> fds) {
        for (int fd : fds) conns_.push_back(std::make_unique<Conn>(fd));
        for (std::size_t i = 0; i < conns_.size(); ++i) {
            readers_.emplace_back([this, i] { read_loop(i); });
        }
    }

    ~TcpHub() override { close(); }

    Incoming recv() override {
        auto m = inbox_.pop();
        if (!m) throw TransportError("hub closed");
        return std::move(*m);
    }

    void send(std::size_t conn, const WireMessage& m) override {
        if (conn >= conns_.size()) throw TransportError("no connection " + std::to_string(conn));
        const auto frame = encode(m);
        Conn& c = *conns_[conn];
        std::lock_guard lk(c.write_mu);
        write_all(c.fd, frame.data(), frame.size());
    }

    std::size_t connections() const override { return conns_.size(); }

    void close() override {
        if (closed_.exchange(true)) return;
        for (auto& c : conns_) ::shutdown(c->fd, SHUT_RDWR);
        for (auto& t : readers_) t.join();
        for (auto& c : conns_) ::close(c->fd);
        inbox_.close();
    }

private:
    struct Conn {
        explicit Conn(int f) : fd(f) {}
        int fd;
        std::mutex write_mu;
    };

    void read_loop(std::size_t i) {
        try {
            while (true) {
                auto m = read_frame(conns_[i]->fd);
                if (!m) break;
                inbox_.push(Incoming{i, std::move(*m), {}});
            }
            inbox_.push(Incoming{i, std::nullopt, {}});
        } catch (const std::exception& e) {
            inbox_.push(Incoming{i, std::nullopt, e.what()});
        }
    }

    std::vector<std::unique_ptr<Conn>> conns_;
    std::vector<std::thread> readers_;
    BlockingQueue<Incoming> inbox_;
    std::atomic<bool> closed_{false};
};

}  // namespace

TcpListener::TcpListener(const Address& addr) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) sys_fail("socket");
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa = resolve(addr);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
        const int err = errno;
        ::close(fd_);
        errno = err;
        sys_fail("bind " + addr.host + ":" + std::to_string(addr.port));
    }
    if (::listen(fd_, 128) < 0) sys_fail("listen");
    socklen_t len = sizeof sa;
    getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    port_ = ntohs(sa.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

std::unique_ptr<Hub> TcpListener::accept(std::size_t n, int timeout_ms) {
    std::vector<int> fds;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (fds.size() < n) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                              deadline - std::chrono::steady_clock::now())
                              .count();
        pollfd p{fd_, POLLIN, 0};
        int r = left > 0 ? ::poll(&p, 1, static_cast<int>(left)) : 0;
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) {
            for (int fd : fds) ::close(fd);
            throw TransportError("only " + std::to_string(fds.size()) + " of " + std::to_string(n) +
                                 " peers connected before the timeout");
        }
        int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (c < 0) {
            if (errno == EINTR) continue;
            sys_fail("accept");
        }
        tune(c);
        fds.push_back(c);
    }
    return std::make_unique<TcpHub>(std::move(fds));
}

std::unique_ptr<Endpoint> tcp_connect(const Address& addr, int timeout_ms) {
    const sockaddr_in sa = resolve(addr);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (true) {
        int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
        if (fd < 0) sys_fail("socket");
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) == 0) {
            tune(fd);
            return std::make_unique<TcpEndpoint>(fd);
        }
        const int err = errno;
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline ||
            (err != ECONNREFUSED && err != EINTR && err != EAGAIN)) {
            errno = err;
            sys_fail("connect " + addr.host + ":" + std::to_string(addr.port));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
}

}  // namespace miniflow
