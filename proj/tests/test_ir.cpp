#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "miniflow/errors.hpp"
#include "miniflow/frontend.hpp"
#include "miniflow/ir.hpp"
#include "support/oracles.hpp"
#include "support/progen.hpp"

using namespace miniflow;

namespace {

constexpr const char* kFragment =
    "leaf (int o) f () template \"<<o>> = 1\";\n"
    "leaf (int o) g (int v) template \"<<o>> = <<v>> + 10\";\n"
    "int x;\n"
    "x = f();\n"
    "int y = g(x);\n"
    "int z = g(x);\n";

constexpr const char* kLoopLeaves =
    "leaf (int o) f (int i) template \"<<o>> = <<i>>\";\n"
    "leaf (int o) g (int t) template \"<<o>> = <<t>> * 2\";\n";

IrProgram compile(std::string_view src) { return lower(compile_source(src)); }

std::string fname(const IrProgram& ir, FutureId f) { return ir.futures.at(f.value).name; }

const EmitLeafTask& leaf(const RuleSpec& r) { return std::get<EmitLeafTask>(r.action); }

IrProgram loop_ir(int first, int last) {
    return compile(std::string(kLoopLeaves) + "foreach i in [" + std::to_string(first) + ":" +
                   std::to_string(last) + "] { t = f(i); v = g(t); }");
}

}  // namespace

TEST_CASE("fragment lowering") {
    auto ir = compile(kFragment);
    REQUIRE(ir.future_count() == 3);
    CHECK(fname(ir, ir.named[0]) == "x");
    CHECK(fname(ir, ir.named[1]) == "y");
    CHECK(fname(ir, ir.named[2]) == "z");
    REQUIRE(ir.rules.size() == 3);
    CHECK(ir.entry_stores.empty());

    const auto& rf = leaf(ir.rules[0]);
    CHECK(rf.binding == "f");
    CHECK(rf.inputs.empty());
    CHECK(rf.outputs == std::vector<FutureId>{ir.named[0]});
    for (int k : {1, 2}) {
        const auto& rg = leaf(ir.rules[k]);
        CHECK(rg.binding == "g");
        CHECK(rg.inputs == std::vector<FutureId>{ir.named[0]});
        CHECK(rg.outputs == std::vector<FutureId>{ir.named[k]});
        CHECK(rg.priority == 0);
    }
    CHECK(ir.rules[1].inputs == ir.rules[2].inputs);

    auto order = topo_order(ir);
    REQUIRE(order.size() == 3);
    CHECK(order[0].value == ir.rules[0].id.value);
    CHECK(oracle::valid_topo(ir, order));
}

TEST_CASE("literal declarations become entry stores") {
    auto ir = compile("int c = 5;");
    CHECK(ir.future_count() == 1);
    REQUIRE(ir.entry_stores.size() == 1);
    CHECK(identical(ir.entry_stores[0].value, Value{std::int64_t{5}}));
    CHECK(ir.rules.empty());
}

TEST_CASE("empty program") {
    auto ir = compile("");
    CHECK(ir.future_count() == 0);
    CHECK(ir.rules.empty());
    CHECK(topo_order(ir).empty());
}

TEST_CASE("loop expansion") {
    auto ir = loop_ir(0, 9);
    CHECK(ir.rules.size() == 20);
    std::set<std::uint32_t> local;
    for (std::size_t i = 0; i < ir.futures.size(); ++i) {
        const auto& n = ir.futures[i].name;
        if (n.rfind("t@", 0) == 0 || n.rfind("v@", 0) == 0) local.insert(static_cast<std::uint32_t>(i));
    }
    CHECK(local.size() == 20);

    // Pipeline k's g reads exactly the t written by pipeline k's f.
    std::map<std::uint32_t, std::string> writer_of;
    for (const auto& r : ir.rules) {
        const auto& e = leaf(r);
        if (e.binding == "f") writer_of[e.outputs.at(0).value] = fname(ir, e.outputs.at(0));
    }
    int g_rules = 0;
    for (const auto& r : ir.rules) {
        const auto& e = leaf(r);
        if (e.binding != "g") continue;
        ++g_rules;
        REQUIRE(e.inputs.size() == 1);
        const std::string t = fname(ir, e.inputs[0]);
        const std::string v = fname(ir, e.outputs.at(0));
        CHECK(writer_of.count(e.inputs[0].value) == 1);
        CHECK(t.substr(1) == v.substr(1));
    }
    CHECK(g_rules == 10);

    CHECK(loop_ir(3, 3).rules.size() == 2);
    CHECK(loop_ir(5, 4).rules.empty());
    CHECK(loop_ir(-2, 1).rules.size() == 8);
}

TEST_CASE("expand_foreach instantiations are disjoint") {
    auto checked = compile_source(std::string(kLoopLeaves) +
                                  "int base = 4; foreach i in [0:5] { t = f(base); v = g(t); }");
    const ast::Foreach* loop = nullptr;
    for (const auto& s : checked.program.statements)
        if (const auto* f = std::get_if<ast::Foreach>(&s.node)) loop = f;
    REQUIRE(loop);
    auto ir = expand_foreach(checked, *loop);
    CHECK(ir.rules.size() == 12);

    std::map<std::string, std::set<std::uint32_t>> by_iter;
    std::set<std::uint32_t> shared;
    for (const auto& r : ir.rules) {
        std::set<std::uint32_t> fs;
        for (auto f : oracle::rule_reads(r)) fs.insert(f.value);
        for (auto f : oracle::rule_outputs(r)) fs.insert(f.value);
        for (auto f : fs) {
            const auto& n = ir.futures[f].name;
            auto at = n.find("@i=");
            if (at == std::string::npos) {
                shared.insert(f);
                continue;
            }
            by_iter[n.substr(at)].insert(f);
        }
    }
    CHECK(by_iter.size() == 6);
    for (auto a = by_iter.begin(); a != by_iter.end(); ++a)
        for (auto b = std::next(a); b != by_iter.end(); ++b)
            for (auto f : a->second) CHECK(b->second.count(f) == 0);
    REQUIRE(shared.size() == 1);
    CHECK(ir.futures[*shared.begin()].name == "base");
}

TEST_CASE("priority and target annotations") {
    auto ir = compile(
        "leaf (int o) f (int i) native \"add_ints\";\n"
        "leaf (int o) h (int a, int b) native \"add_ints\";\n"
        "int a = 1; @priority(7) @target(2) int b = h(a, a); int c = h(a, b);");
    REQUIRE(ir.rules.size() == 2);
    CHECK(leaf(ir.rules[0]).priority == 7);
    CHECK(leaf(ir.rules[0]).target == 2);
    CHECK(leaf(ir.rules[0]).inputs.size() == 2);
    CHECK(ir.rules[0].inputs.size() == 1);
    CHECK(leaf(ir.rules[1]).priority == 0);
    CHECK_FALSE(leaf(ir.rules[1]).target);
}

TEST_CASE("dump format") {
    auto text = dump(compile(kFragment));
    CHECK(text.find("rule 0: [] -> ") != std::string::npos);
    CHECK(text.find("rule 1: [0] -> ") != std::string::npos);
    CHECK(text.find("rule 2: [0] -> ") != std::string::npos);
    CHECK(text == dump(compile(kFragment)));
}

TEST_CASE("inline ops") {
    auto v = [](std::string_view op, std::vector<Value> args) { return eval_inline(op, args); };
    std::vector<Value> ints{std::int64_t{7}, std::int64_t{2}};
    CHECK(identical(*v("add", ints), Value{std::int64_t{9}}));
    CHECK(identical(*v("sub", ints), Value{std::int64_t{5}}));
    CHECK(identical(*v("mul", ints), Value{std::int64_t{14}}));
    CHECK(identical(*v("div", ints), Value{std::int64_t{3}}));
    CHECK_THROWS_AS(v("div", {std::int64_t{1}, std::int64_t{0}}), RuntimeError);
    CHECK(identical(*v("concat", {std::string("ab"), std::string("c")}), Value{std::string("abc")}));
    CHECK(identical(*v("div", {1.0, 4.0}), Value{0.25}));
    std::string trace;
    std::vector<Value> pf{std::string("%d-%s"), std::int64_t{3}, std::string("x")};
    CHECK_FALSE(eval_inline("printf", pf, &trace));
    CHECK(trace.find("3-x") != std::string::npos);
}

TEST_CASE("single writer, acyclic, valid topo order over generated programs") {
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        auto g = progen::generate(seed);
        CAPTURE(seed);
        auto ir = compile(g.source);
        for (auto [f, n] : oracle::writers(ir)) CHECK(n == 1);
        CHECK(oracle::acyclic(ir));
        CHECK(oracle::valid_topo(ir, topo_order(ir)));
        for (const auto& r : ir.rules) {
            auto outs = oracle::rule_outputs(r);
            for (auto f : outs) CHECK(std::find(r.inputs.begin(), r.inputs.end(), f) == r.inputs.end());
            auto reads = oracle::rule_reads(r);
            std::set<std::uint32_t> want;
            for (auto f : reads) want.insert(f.value);
            std::set<std::uint32_t> got;
            for (auto f : r.inputs) got.insert(f.value);
            CHECK(want == got);
        }
    }
}

TEST_CASE("topo_order rejects a hand-built cycle") {
    IrProgram ir;
    ir.futures = {{ScalarType::Int, "a"}, {ScalarType::Int, "b"}};
    ir.rules.push_back({RuleId{0}, {FutureId{1}}, InlineOp{"add", {FutureId{1}, FutureId{1}}, FutureId{0}}});
    ir.rules.push_back({RuleId{1}, {FutureId{0}}, InlineOp{"add", {FutureId{0}, FutureId{0}}, FutureId{1}}});
    CHECK_FALSE(oracle::acyclic(ir));
    CHECK_THROWS_AS(topo_order(ir), InternalError);
}
