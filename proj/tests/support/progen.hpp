#pragma once

// Random well-formed scripts plus the values their named variables must end
// with, computed here directly rather than by the runtime.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "miniflow/value.hpp"

namespace progen {

struct Program {
    std::string source;
    std::vector<std::pair<std::string, miniflow::Value>> expected;  // named top-level
    int statements = 0;
    int max_depth = 0;
};

// Deterministic leaves over the toy backend and the standard natives.
inline constexpr const char* kPrelude =
    "leaf (int o) inc (int a) template \"<<o>> = <<a>> + 1\";\n"
    "leaf (int o) mix (int a, int b) guest \"o = a * 3 - b\";\n"
    "leaf (int o) addn (int a, int b) native \"add_ints\";\n"
    "leaf (float o) half (int a) template \"<<o>> = float(<<a>>) / 2.0\";\n"
    "leaf (string o) tag (string s, int a) guest \"o = s + str(a)\";\n"
    "leaf (int o) blen (blob b) native \"blob_len\";\n";

inline std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

class Generator {
public:
    explicit Generator(std::uint64_t seed, int max_statements = 50, int max_depth = 3)
        : rng_(seed), budget_(max_statements), max_depth_(max_depth) {}

    Program generate() {
        Program p;
        p.source = kPrelude;
        Scope top;
        const int target = pick(5, budget_);
        std::vector<Deferred> deferred;
        while (used_ < target) {
            const int r = pick(0, 9);
            if (r == 0 && used_ + 2 <= target) {
                loop(top, p.source, 0);
            } else if (r == 1 && used_ + 2 <= target) {
                // Declared now, assigned later, read in between.
                std::string name = fresh();
                Expr e = int_expr(top);
                p.source += "int " + name + ";\n";
                ++used_;
                deferred.push_back({name, e});
                top.ints.push_back({name, e.value});
                p.expected.emplace_back(name, e.value);
            } else {
                statement(top, p.source, "", &p.expected);
            }
            if (!deferred.empty() && pick(0, 2) == 0) {
                flush(deferred.back(), p.source);
                deferred.pop_back();
            }
        }
        while (!deferred.empty()) {
            flush(deferred.back(), p.source);
            deferred.pop_back();
        }
        p.statements = used_;
        p.max_depth = seen_depth_;
        return p;
    }

private:
    struct IntVar {
        std::string name;
        std::int64_t value;
    };
    struct StrVar {
        std::string name;
        std::string value;
    };
    struct Scope {
        std::vector<IntVar> ints;
        std::vector<StrVar> strs;
        std::vector<std::pair<std::string, double>> floats;
    };
    struct Expr {
        std::string text;
        std::int64_t value;
    };
    struct Deferred {
        std::string name;
        Expr e;
    };

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    std::string fresh() { return "v" + std::to_string(next_++); }

    void flush(const Deferred& d, std::string& src) {
        src += d.name + " = " + d.e.text + ";\n";
        ++used_;
    }

    Expr atom(const Scope& s) {
        if (s.ints.empty() || pick(0, 3) == 0) {
            const std::int64_t v = pick(-20, 20);
            return {v < 0 ? "(" + std::to_string(v) + ")" : std::to_string(v), v};
        }
        const auto& var = s.ints[static_cast<std::size_t>(pick(0, static_cast<int>(s.ints.size()) - 1))];
        return {var.name, var.value};
    }

    Expr int_expr(const Scope& s, int depth = 0) {
        if (depth >= 2 || pick(0, 2) == 0) return atom(s);
        Expr a = int_expr(s, depth + 1);
        Expr b = int_expr(s, depth + 1);
        switch (pick(0, 2)) {
            case 0: return {"(" + a.text + " + " + b.text + ")", wrap_add(a.value, b.value)};
            case 1: return {"(" + a.text + " - " + b.text + ")", wrap_sub(a.value, b.value)};
            default: return {"(" + a.text + " * " + b.text + ")", wrap_mul(a.value, b.value)};
        }
    }

    // One declaration; `named` is null inside loops.
    void statement(Scope& s, std::string& src, const std::string& indent,
                   std::vector<std::pair<std::string, miniflow::Value>>* named) {
        const std::string name = fresh();
        ++used_;
        const int kind = pick(0, 7);
        auto record = [&](miniflow::Value v) {
            if (named) named->emplace_back(name, std::move(v));
        };
        if (kind == 0) {
            Expr a = int_expr(s);
            src += indent + "int " + name + " = inc(" + a.text + ");\n";
            s.ints.push_back({name, wrap_add(a.value, 1)});
            record(s.ints.back().value);
        } else if (kind == 1) {
            Expr a = int_expr(s), b = int_expr(s);
            src += indent + "int " + name + " = mix(" + a.text + ", " + b.text + ");\n";
            s.ints.push_back({name, wrap_sub(wrap_mul(a.value, 3), b.value)});
            record(s.ints.back().value);
        } else if (kind == 2) {
            Expr a = int_expr(s), b = int_expr(s);
            src += indent + "int " + name + " = addn(" + a.text + ", " + b.text + ");\n";
            s.ints.push_back({name, wrap_add(a.value, b.value)});
            record(s.ints.back().value);
        } else if (kind == 3) {
            Expr a = int_expr(s);
            src += indent + "float " + name + " = half(" + a.text + ");\n";
            const double v = static_cast<double>(a.value) / 2.0;
            s.floats.emplace_back(name, v);
            record(v);
        } else if (kind == 4) {
            Expr a = int_expr(s);
            std::string base = "s";
            std::string base_text = "\"s\"";
            if (!s.strs.empty() && pick(0, 1)) {
                const auto& sv = s.strs[static_cast<std::size_t>(pick(0, static_cast<int>(s.strs.size()) - 1))];
                base = sv.value;
                base_text = sv.name;
            }
            src += indent + "string " + name + " = tag(" + base_text + ", " + a.text + ");\n";
            s.strs.push_back({name, base + std::to_string(a.value)});
            record(s.strs.back().value);
        } else if (kind == 5 && !s.strs.empty()) {
            const auto& sv = s.strs[static_cast<std::size_t>(pick(0, static_cast<int>(s.strs.size()) - 1))];
            src += indent + "int " + name + " = blen(blob_from_string(" + sv.name + "));\n";
            s.ints.push_back({name, static_cast<std::int64_t>(sv.value.size())});
            record(s.ints.back().value);
        } else if (kind == 6 && !s.floats.empty()) {
            const auto& fv = s.floats[static_cast<std::size_t>(pick(0, static_cast<int>(s.floats.size()) - 1))];
            Expr a = int_expr(s);
            src += indent + "float " + name + " = " + fv.first + " + itof(" + a.text + ");\n";
            const double v = fv.second + static_cast<double>(a.value);
            s.floats.emplace_back(name, v);
            record(v);
        } else {
            Expr a = int_expr(s);
            src += indent + "int " + name + " = " + a.text + ";\n";
            s.ints.push_back({name, a.value});
            record(a.value);
        }
    }

    // Body variables are loop-local and never read outside, so only their
    // text matters; the index is tracked with a placeholder value.
    void loop(const Scope& outer, std::string& src, int level) {
        ++depth_;
        seen_depth_ = std::max(seen_depth_, depth_);
        const std::string idx = "i" + std::to_string(next_++);
        const int first = pick(-2, 3);
        const int last = first + pick(-1, 3);
        const std::string pad(static_cast<std::size_t>(2 * level), ' ');
        src += pad + "foreach " + idx + " in [" + std::to_string(first) + ":" + std::to_string(last) + "] {\n";
        ++used_;
        Scope s = outer;
        s.ints.push_back({idx, 0});
        const int body = pick(1, 3);
        for (int k = 0; k < body && (k == 0 || used_ < budget_); ++k) {
            if (depth_ < max_depth_ && used_ + 2 <= budget_ && pick(0, 3) == 0) {
                loop(s, src, level + 1);
            } else {
                statement(s, src, pad + "  ", nullptr);
            }
        }
        src += pad + "}\n";
        --depth_;
    }

    std::mt19937_64 rng_;
    int budget_;
    int max_depth_;
    int used_ = 0;
    int next_ = 0;
    int depth_ = 0;
    int seen_depth_ = 0;
};

inline Program generate(std::uint64_t seed, int max_statements = 50, int max_depth = 3) {
    return Generator(seed, max_statements, max_depth).generate();
}

}  // namespace progen
