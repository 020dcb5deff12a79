#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "miniflow/engine.hpp"
#include "miniflow/event_log.hpp"
#include "miniflow/ir.hpp"
#include "miniflow/transport.hpp"
#include "miniflow/worker.hpp"

namespace miniflow {

enum class Mode { Threads, Processes };

std::string_view mode_name(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view s) noexcept;

enum class Failure { None, Runtime, Leaf };

struct RunOptions {
    int workers = 1;
    Mode mode = Mode::Threads;
    Policy policy = Policy::Retain;
    std::string backend = "toy";
    const PackageIndex* packages = nullptr;
    /// Defaults to NativeRegistry::standard().
    const NativeRegistry* natives = nullptr;
    EventLog* log = nullptr;
    /// printf output from the engine.
    std::function<void(std::string_view)> trace;
    /// Server address in processes mode; port 0 picks a free one.
    Address listen;
    /// Work types per worker id; missing or empty entries serve every type.
    std::map<std::int32_t, std::vector<std::int32_t>> worker_types;
};

struct RunResult {
    FutureStore store;
    Failure failure = Failure::None;
    std::string error;
    std::size_t tasks = 0;

    bool ok() const noexcept { return failure == Failure::None; }
};

/// One engine, one server and `workers` workers, run to quiescence. Errors
/// are reported in the result rather than thrown.
RunResult run_program(const IrProgram& ir, const RunOptions& opts);

// ---------------------------------------------------------------- roles

/// Server loop over a hub; returns once the engine has quiesced and every
/// one of `workers` workers has been told to shut down.
void run_server(Hub& hub, std::size_t workers, EventLog* log = nullptr);

struct EngineOutcome {
    FutureStore store;
    Failure failure = Failure::None;
    std::string error;
    std::size_t tasks = 0;
};

EngineOutcome run_engine(Endpoint& ep, const IrProgram& ir, EngineOptions opts = {});

/// Requests tasks until the server signals shutdown.
void run_worker(Endpoint& ep, WorkerRuntime& rt, std::vector<std::int32_t> work_types = {});

// ---------------------------------------------------------------- stats

struct RunStats {
    std::size_t tasks = 0;
    std::map<std::int32_t, std::size_t> per_worker;
    double makespan_ms = 0;
    /// Busy time over workers × makespan; 0 when no task ran.
    double utilization = 0;
};

/// From the server's `done` events.
RunStats compute_stats(const std::vector<Event>& events, int workers);
std::string format_stats(const RunStats& s);

}  // namespace miniflow
