#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace miniflow {

struct Event {
    std::uint64_t ts = 0;    // logical timestamp, total order within one log
    std::int64_t t_us = 0;   // microseconds since the log was created
    std::string kind;
    std::vector<std::pair<std::string, std::string>> fields;

    std::optional<std::string_view> get(std::string_view key) const;
    std::int64_t get_int(std::string_view key, std::int64_t fallback = -1) const;

    /// `ts=<n> ev=<kind> k=v ... t_us=<m>`
    std::string format() const;
};

/// Parses one formatted line back into an Event. Returns nullopt on junk.
std::optional<Event> parse_event(std::string_view line);

/// Thread-safe append-only event log shared by the engine and the server.
class EventLog {
public:
    EventLog();

    void record(std::string kind, std::vector<std::pair<std::string, std::string>> fields);

    std::vector<Event> snapshot() const;
    std::string format() const;
    std::int64_t now_us() const;
    /// Converts a steady-clock reading in microseconds to this log's time base.
    std::int64_t relative_us(std::int64_t steady_us) const;

    /// Mirror every record to stderr as it happens.
    void set_echo(bool on) { echo_ = on; }

private:
    mutable std::mutex mu_;
    std::vector<Event> events_;
    std::chrono::steady_clock::time_point start_;
    bool echo_ = false;
};

}  // namespace miniflow
