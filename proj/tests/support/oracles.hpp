#pragma once

// Checks over an IrProgram written against the raw rule list, independent of
// the library's own ordering helpers.

#include <map>
#include <set>
#include <vector>

#include "miniflow/ir.hpp"

namespace oracle {

inline std::vector<miniflow::FutureId> rule_outputs(const miniflow::RuleSpec& r) {
    if (const auto* e = std::get_if<miniflow::EmitLeafTask>(&r.action)) return e->outputs;
    const auto& op = std::get<miniflow::InlineOp>(r.action);
    if (op.output) return {*op.output};
    return {};
}

inline std::vector<miniflow::FutureId> rule_reads(const miniflow::RuleSpec& r) {
    if (const auto* e = std::get_if<miniflow::EmitLeafTask>(&r.action)) return e->inputs;
    return std::get<miniflow::InlineOp>(r.action).inputs;
}

// Number of rules writing each future.
inline std::map<std::uint32_t, int> writers(const miniflow::IrProgram& ir) {
    std::map<std::uint32_t, int> n;
    for (const auto& r : ir.rules)
        for (auto f : rule_outputs(r)) ++n[f.value];
    for (const auto& s : ir.entry_stores) ++n[s.future.value];
    return n;
}

// Kahn's algorithm over rule->rule edges; true when every rule gets removed.
inline bool acyclic(const miniflow::IrProgram& ir) {
    std::map<std::uint32_t, std::size_t> producer;
    for (std::size_t i = 0; i < ir.rules.size(); ++i)
        for (auto f : rule_outputs(ir.rules[i])) producer[f.value] = i;
    std::vector<std::set<std::size_t>> succ(ir.rules.size());
    std::vector<int> indeg(ir.rules.size(), 0);
    for (std::size_t i = 0; i < ir.rules.size(); ++i) {
        for (auto f : ir.rules[i].inputs) {
            auto it = producer.find(f.value);
            if (it != producer.end() && succ[it->second].insert(i).second) ++indeg[i];
        }
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < indeg.size(); ++i)
        if (indeg[i] == 0) ready.push_back(i);
    std::size_t removed = 0;
    while (!ready.empty()) {
        auto i = ready.back();
        ready.pop_back();
        ++removed;
        for (auto j : succ[i])
            if (--indeg[j] == 0) ready.push_back(j);
    }
    return removed == ir.rules.size();
}

// True when `order` lists every rule once and producers precede consumers.
inline bool valid_topo(const miniflow::IrProgram& ir, const std::vector<miniflow::RuleId>& order) {
    if (order.size() != ir.rules.size()) return false;
    std::map<std::uint32_t, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (!pos.emplace(order[i].value, i).second) return false;
    std::map<std::uint32_t, std::uint32_t> producer;
    for (const auto& r : ir.rules)
        for (auto f : rule_outputs(r)) producer[f.value] = r.id.value;
    for (const auto& r : ir.rules) {
        for (auto f : r.inputs) {
            auto it = producer.find(f.value);
            if (it != producer.end() && pos.at(it->second) >= pos.at(r.id.value)) return false;
        }
    }
    return true;
}

}  // namespace oracle
