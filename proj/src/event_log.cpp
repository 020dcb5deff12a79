#include "miniflow/event_log.hpp"

#include <charconv>
#include <iostream>

namespace miniflow {

std::optional<std::string_view> Event::get(std::string_view key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return std::string_view(v);
    }
    return std::nullopt;
}

std::int64_t Event::get_int(std::string_view key, std::int64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::int64_t out = fallback;
    std::from_chars(v->data(), v->data() + v->size(), out);
    return out;
}

std::string Event::format() const {
    std::string s = "ts=" + std::to_string(ts) + " ev=" + kind;
    for (const auto& [k, v] : fields) s += " " + k + "=" + v;
    s += " t_us=" + std::to_string(t_us);
    return s;
}

std::optional<Event> parse_event(std::string_view line) {
    Event e;
    bool have_ts = false;
    bool have_kind = false;
    while (!line.empty()) {
        auto sp = line.find(' ');
        std::string_view tok = line.substr(0, sp);
        line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
        if (tok.empty()) continue;
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) return std::nullopt;
        std::string_view k = tok.substr(0, eq);
        std::string_view v = tok.substr(eq + 1);
        if (k == "ts") {
            have_ts = std::from_chars(v.data(), v.data() + v.size(), e.ts).ec == std::errc{};
        } else if (k == "t_us") {
            std::from_chars(v.data(), v.data() + v.size(), e.t_us);
        } else if (k == "ev") {
            e.kind = std::string(v);
            have_kind = true;
        } else {
            e.fields.emplace_back(std::string(k), std::string(v));
        }
    }
    if (!have_ts || !have_kind) return std::nullopt;
    return e;
}

EventLog::EventLog() : start_(std::chrono::steady_clock::now()) {}

std::int64_t EventLog::relative_us(std::int64_t steady_us) const {
    return steady_us - std::chrono::duration_cast<std::chrono::microseconds>(start_.time_since_epoch()).count();
}

std::int64_t EventLog::now_us() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                                 start_)
        .count();
}

void EventLog::record(std::string kind, std::vector<std::pair<std::string, std::string>> fields) {
    std::lock_guard lock(mu_);
    Event e;
    e.ts = events_.size();
    e.t_us = now_us();
    e.kind = std::move(kind);
    e.fields = std::move(fields);
    if (echo_) std::cerr << e.format() << '\n';
    events_.push_back(std::move(e));
}

std::vector<Event> EventLog::snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::string EventLog::format() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& e : events_) out += e.format() + "\n";
    return out;
}

}  // namespace miniflow
