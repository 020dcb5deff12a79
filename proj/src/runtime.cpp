#include "miniflow/runtime.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "miniflow/balancer.hpp"
#include "miniflow/errors.hpp"

namespace miniflow {

std::string_view mode_name(Mode m) noexcept { return m == Mode::Threads ? "threads" : "processes"; }

std::optional<Mode> parse_mode(std::string_view s) noexcept {
    if (s == "threads") return Mode::Threads;
    if (s == "processes") return Mode::Processes;
    return std::nullopt;
}

// ---------------------------------------------------------------- server

void run_server(Hub& hub, std::size_t workers, EventLog* log) {
    Balancer bal(log);
    std::map<std::size_t, std::int32_t> peer_of;
    std::map<std::int32_t, std::size_t> conn_of;
    std::optional<std::size_t> engine;
    std::set<std::int32_t> signaled;
    bool quiesced = false;

    auto peer = [&](std::size_t conn) -> std::int32_t {
        auto it = peer_of.find(conn);
        if (it == peer_of.end()) throw ProtocolError("message from unregistered connection " + std::to_string(conn));
        return it->second;
    };
    auto signal = [&](std::int32_t w) {
        hub.send(conn_of.at(w), ShutdownSignal{});
        signaled.insert(w);
    };
    auto finished = [&] { return quiesced && engine && signaled.size() == workers; };

    while (!finished()) {
        Incoming in = hub.recv();
        if (!in.msg) {
            auto it = peer_of.find(in.conn);
            const bool expected = it != peer_of.end() && it->second >= 0 && signaled.count(it->second);
            if (!expected) {
                std::string who = it == peer_of.end() ? "unregistered peer"
                                  : it->second == kEngineId ? "engine"
                                                            : "worker " + std::to_string(it->second);
                throw TransportError(who + " disconnected" + (in.error.empty() ? "" : ": " + in.error));
            }
            continue;
        }
        std::visit(
            [&](auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, RegisterWorker>) {
                    if (peer_of.count(in.conn)) throw ProtocolError("connection registered twice");
                    if (m.worker == kEngineId) {
                        if (engine) throw ProtocolError("second engine registered");
                        engine = in.conn;
                    } else {
                        bal.register_worker(m.worker, m.work_types);
                        conn_of[m.worker] = in.conn;
                    }
                    peer_of[in.conn] = m.worker;
                } else if constexpr (std::is_same_v<T, PutTask>) {
                    if (peer(in.conn) != kEngineId) throw ProtocolError("PutTask from a worker");
                    if (auto d = bal.put(std::move(m.task))) hub.send(conn_of.at(d->worker), TaskAssign{std::move(d->task)});
                } else if constexpr (std::is_same_v<T, GetRequest>) {
                    const auto w = peer(in.conn);
                    if (w != m.worker) throw ProtocolError("GetRequest names worker " + std::to_string(m.worker));
                    if (bal.shutting_down()) {
                        signal(w);
                    } else if (auto t = bal.get(w, m.work_type)) {
                        hub.send(in.conn, TaskAssign{std::move(*t)});
                    }
                } else if constexpr (std::is_same_v<T, Complete>) {
                    const auto w = peer(in.conn);
                    bal.complete(m.task, w);
                    if (log) {
                        log->record("done", {{"task", std::to_string(m.task)},
                                             {"worker", std::to_string(w)},
                                             {"start_us", std::to_string(log->relative_us(m.start_us))},
                                             {"end_us", std::to_string(log->relative_us(m.end_us))},
                                             {"ok", m.error ? "0" : "1"}});
                    }
                    if (!quiesced) hub.send(*engine, m);
                } else if constexpr (std::is_same_v<T, Quiesce>) {
                    if (peer(in.conn) != kEngineId) throw ProtocolError("Quiesce from a worker");
                    quiesced = true;
                    for (auto w : bal.shutdown()) signal(w);
                } else {
                    throw ProtocolError("unexpected " + std::string(message_name(WireMessage{m})) + " at server");
                }
            },
            *in.msg);
    }
    hub.send(*engine, ShutdownSignal{});
}

// ---------------------------------------------------------------- engine

EngineOutcome run_engine(Endpoint& ep, const IrProgram& ir, EngineOptions opts) {
    EngineOutcome out;
    ep.send(RegisterWorker{kEngineId, {}});
    Engine engine(ir, opts);
    auto flush = [&] {
        for (auto& t : engine.take_emitted()) {
            ++out.tasks;
            ep.send(PutTask{std::move(t)});
        }
    };
    auto fail = [&](Failure f, std::string msg) {
        if (out.failure == Failure::None) {
            out.failure = f;
            out.error = std::move(msg);
        }
    };
    try {
        engine.init();
        flush();
        while (!engine.quiescent()) {
            WireMessage m = ep.recv();
            auto* c = std::get_if<Complete>(&m);
            if (!c) throw ProtocolError("engine received " + std::string(message_name(m)));
            if (c->error) {
                const auto rule = engine.rule_of(c->task);
                std::string where = rule ? "rule " + std::to_string(rule->value) : "unknown rule";
                fail(Failure::Leaf, where + ", task " + std::to_string(c->task) + ", worker " +
                                        std::to_string(c->worker) + ": " + *c->error);
                break;
            }
            engine.on_task_complete(c->task, std::move(c->outputs));
            flush();
        }
        if (out.failure == Failure::None && engine.stalled()) {
            fail(Failure::Runtime, std::to_string(engine.pending()) + " rules can never fire");
        }
    } catch (const TransportError& e) {
        fail(Failure::Runtime, std::string("transport: ") + e.what());
        out.store = engine.cells();
        return out;
    } catch (const std::exception& e) {
        fail(Failure::Runtime, e.what());
    }
    out.store = engine.cells();
    try {
        ep.send(Quiesce{});
        while (!std::holds_alternative<ShutdownSignal>(ep.recv())) {
        }
    } catch (const TransportError& e) {
        fail(Failure::Runtime, std::string("transport: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------- worker

void run_worker(Endpoint& ep, WorkerRuntime& rt, std::vector<std::int32_t> work_types) {
    ep.send(RegisterWorker{rt.id(), std::move(work_types)});
    while (true) {
        ep.send(GetRequest{-1, rt.id()});
        WireMessage m = ep.recv();
        if (std::holds_alternative<ShutdownSignal>(m)) return;
        auto* a = std::get_if<TaskAssign>(&m);
        if (!a) throw ProtocolError("worker received " + std::string(message_name(m)));
        Complete c;
        c.task = a->task.id;
        c.worker = rt.id();
        c.start_us = steady_now_us();
        try {
            auto outs = rt.exec_leaf(a->task);
            for (std::size_t i = 0; i < outs.size(); ++i) c.outputs.emplace_back(a->task.outputs[i], std::move(outs[i]));
        } catch (const std::exception& e) {
            c.error = e.what();
        }
        try {
            rt.end_task_lifecycle();
        } catch (const std::exception& e) {
            c.outputs.clear();
            c.error = std::string("interpreter reinitialization failed: ") + e.what();
        }
        c.end_us = steady_now_us();
        ep.send(c);
    }
}

// ---------------------------------------------------------------- assembly

namespace {

void validate(const IrProgram& ir, const RunOptions& opts, const NativeRegistry& natives) {
    if (opts.workers < 1) throw Error("at least one worker is required");
    for (const auto& r : ir.rules) {
        if (const auto* e = std::get_if<EmitLeafTask>(&r.action); e && e->target) {
            if (*e->target < 0 || *e->target >= opts.workers) {
                throw Error("rule " + std::to_string(r.id.value) + " targets worker " +
                            std::to_string(*e->target) + " but only " + std::to_string(opts.workers) +
                            " workers exist");
            }
        }
    }
    if (!backend_available(opts.backend)) throw Error("guest backend '" + opts.backend + "' is not available");
    WorkerRuntime probe({0, opts.policy, opts.backend, opts.packages, &natives, nullptr});
    for (const auto& b : ir.bindings) probe.register_binding(b);
}

std::unique_ptr<WorkerRuntime> make_worker(const IrProgram& ir, const RunOptions& opts,
                                           const NativeRegistry& natives, std::int32_t id, EventLog* log) {
    auto rt = std::make_unique<WorkerRuntime>(WorkerConfig{id, opts.policy, opts.backend, opts.packages, &natives, log});
    for (const auto& b : ir.bindings) rt->register_binding(b);
    return rt;
}

std::vector<std::int32_t> types_for(const RunOptions& opts, std::int32_t id) {
    auto it = opts.worker_types.find(id);
    return it == opts.worker_types.end() ? std::vector<std::int32_t>{} : it->second;
}

RunResult finish(EngineOutcome e, const std::string& side_error) {
    RunResult r;
    r.store = std::move(e.store);
    r.tasks = e.tasks;
    r.failure = e.failure;
    r.error = std::move(e.error);
    if (!side_error.empty()) {
        if (r.failure == Failure::None || r.error.rfind("transport:", 0) == 0) {
            r.failure = Failure::Runtime;
            r.error = side_error;
        }
    }
    return r;
}

RunResult run_threads(const IrProgram& ir, const RunOptions& opts, const NativeRegistry& natives) {
    InProcNetwork net;
    std::mutex err_mu;
    std::string side_error;
    auto record = [&](const std::string& who, const std::exception& e) {
        std::lock_guard lk(err_mu);
        if (side_error.empty()) side_error = who + ": " + e.what();
    };

    auto engine_ep = net.connect();
    std::vector<std::unique_ptr<Endpoint>> eps;
    for (int w = 0; w < opts.workers; ++w) eps.push_back(net.connect());

    std::thread server([&] {
        try {
            run_server(net.hub(), static_cast<std::size_t>(opts.workers), opts.log);
        } catch (const std::exception& e) {
            record("server", e);
            net.hub().close();
        }
    });
    std::vector<std::thread> workers;
    for (int w = 0; w < opts.workers; ++w) {
        workers.emplace_back([&, w] {
            try {
                auto rt = make_worker(ir, opts, natives, w, opts.log);
                run_worker(*eps[w], *rt, types_for(opts, w));
            } catch (const std::exception& e) {
                record("worker " + std::to_string(w), e);
                eps[w]->close();
            }
        });
    }
    EngineOutcome e = run_engine(*engine_ep, ir, {opts.log, opts.trace});
    server.join();
    for (auto& t : workers) t.join();
    return finish(std::move(e), side_error);
}

RunResult run_processes(const IrProgram& ir, const RunOptions& opts, const NativeRegistry& natives) {
    TcpListener listener(opts.listen);
    Address target{opts.listen.host == "0.0.0.0" ? "127.0.0.1" : opts.listen.host, listener.port()};

    std::fflush(nullptr);
    std::vector<pid_t> children;
    for (int w = 0; w < opts.workers; ++w) {
        pid_t pid = ::fork();
        if (pid < 0) {
            for (pid_t c : children) ::kill(c, SIGKILL);
            for (pid_t c : children) ::waitpid(c, nullptr, 0);
            throw TransportError("fork failed");
        }
        if (pid == 0) {
            int status = 0;
            try {
                listener.close();
#ifdef MINIFLOW_HAVE_PYTHON
                python_after_fork_child();
#endif
                auto ep = tcp_connect(target);
                auto rt = make_worker(ir, opts, natives, w, nullptr);
                run_worker(*ep, *rt, types_for(opts, w));
                ep->close();
            } catch (const std::exception& e) {
                std::fprintf(stderr, "miniflow: worker %d: %s\n", w, e.what());
                status = 1;
            }
            std::fflush(stderr);
            ::_exit(status);
        }
        children.push_back(pid);
    }

    std::string side_error;
    std::unique_ptr<Hub> hub;
    std::thread server([&] {
        try {
            hub = listener.accept(static_cast<std::size_t>(opts.workers) + 1);
            run_server(*hub, static_cast<std::size_t>(opts.workers), opts.log);
        } catch (const std::exception& e) {
            side_error = std::string("server: ") + e.what();
            if (hub) hub->close();
        }
    });

    EngineOutcome e;
    try {
        auto ep = tcp_connect(target);
        e = run_engine(*ep, ir, {opts.log, opts.trace});
        ep->close();
    } catch (const std::exception& ex) {
        e.failure = Failure::Runtime;
        e.error = std::string("engine: ") + ex.what();
    }
    server.join();
    if (hub) hub->close();
    for (pid_t c : children) {
        int status = 0;
        ::waitpid(c, &status, 0);
        if ((!WIFEXITED(status) || WEXITSTATUS(status) != 0) && side_error.empty()) {
            side_error = "worker process " + std::to_string(c) + " failed";
        }
    }
    return finish(std::move(e), side_error);
}

}  // namespace

RunResult run_program(const IrProgram& ir, const RunOptions& opts) {
    static const NativeRegistry standard = NativeRegistry::standard();
    const NativeRegistry& natives = opts.natives ? *opts.natives : standard;
    try {
        validate(ir, opts, natives);
        return opts.mode == Mode::Threads ? run_threads(ir, opts, natives) : run_processes(ir, opts, natives);
    } catch (const std::exception& e) {
        RunResult r;
        r.failure = Failure::Runtime;
        r.error = e.what();
        return r;
    }
}

// ---------------------------------------------------------------- stats

RunStats compute_stats(const std::vector<Event>& events, int workers) {
    RunStats s;
    for (int w = 0; w < workers; ++w) s.per_worker[w] = 0;
    std::int64_t first = 0, last = 0;
    double busy = 0;
    for (const auto& e : events) {
        if (e.kind != "done") continue;
        const auto start = e.get_int("start_us");
        const auto end = e.get_int("end_us");
        ++s.per_worker[static_cast<std::int32_t>(e.get_int("worker"))];
        if (s.tasks == 0 || start < first) first = start;
        if (s.tasks == 0 || end > last) last = end;
        busy += static_cast<double>(end - start);
        ++s.tasks;
    }
    if (s.tasks == 0) return s;
    const double span = static_cast<double>(last - first);
    s.makespan_ms = span / 1000.0;
    s.utilization = span > 0 && workers > 0 ? busy / (span * workers) : 0.0;
    return s;
}

std::string format_stats(const RunStats& s) {
    std::ostringstream o;
    o << "tasks: " << s.tasks << "\n";
    o << "per-worker:";
    for (const auto& [w, n] : s.per_worker) o << " w" << w << "=" << n;
    o << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", s.makespan_ms);
    o << "makespan_ms: " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.3f", s.utilization);
    o << "utilization: " << buf << "\n";
    return o.str();
}

}  // namespace miniflow
