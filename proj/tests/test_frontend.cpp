#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "miniflow/errors.hpp"
#include "miniflow/frontend.hpp"
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

std::vector<std::pair<TokenKind, std::string>> kinds(std::string_view src) {
    std::vector<std::pair<TokenKind, std::string>> out;
    for (const auto& t : tokenize(src)) out.emplace_back(t.kind, t.text);
    return out;
}

ResolveError::Kind resolve_error(std::string_view src) {
    try {
        compile_source(src);
    } catch (const ResolveError& e) {
        return e.kind();
    }
    FAIL("expected a resolve error for: " << src);
    return ResolveError::Kind::Unbound;
}

}  // namespace

TEST_CASE("tokenize") {
    using K = TokenKind;
    CHECK(kinds("int x;") == decltype(kinds("")){{K::Keyword, "int"}, {K::Identifier, "x"}, {K::Punctuation, ";"}});
    CHECK(tokenize("").empty());
    CHECK(kinds("int y = g(x);") ==
          decltype(kinds("")){{K::Keyword, "int"}, {K::Identifier, "y"}, {K::Punctuation, "="},
                              {K::Identifier, "g"}, {K::Punctuation, "("}, {K::Identifier, "x"},
                              {K::Punctuation, ")"}, {K::Punctuation, ";"}});

    auto toks = tokenize("int a; // note\n  float b = 1.5e3;");
    REQUIRE(toks.size() == 8);
    CHECK(toks[3].loc.line == 2);
    CHECK(toks[3].loc.column == 3);
    CHECK(toks[6].kind == K::FloatLiteral);

    auto s = tokenize("\"set <<o>> [ f <<i>> ]\"");
    REQUIRE(s.size() == 1);
    CHECK(string_literal_value(s[0]) == "set <<o>> [ f <<i>> ]");
    CHECK(string_literal_value(tokenize(R"("a\"b\\c\n")")[0]) == "a\"b\\c\n");
}

TEST_CASE("tokenize errors carry locations") {
    try {
        tokenize("int x;\nstring s = \"abc");
        FAIL("no error");
    } catch (const LexError& e) {
        CHECK(e.loc().line == 2);
        CHECK(e.loc().column == 12);
    }
    CHECK_THROWS_AS(tokenize("int x = 99999999999999999999;"), LexError);
    CHECK_THROWS_AS(tokenize("int x = 1 $ 2;"), LexError);
    CHECK_THROWS_AS(tokenize("\"bad \\q escape\""), LexError);
}

TEST_CASE("parse the fragment and the loop") {
    auto p = parse(tokenize(kFragment));
    REQUIRE(p.statements.size() == 6);
    CHECK(std::holds_alternative<ast::VarDecl>(p.statements[2].node));
    CHECK(std::holds_alternative<ast::Assign>(p.statements[3].node));
    const auto& y = std::get<ast::VarDecl>(p.statements[4].node);
    REQUIRE(y.init);
    CHECK(std::get<ast::Call>(y.init->node).callee == "g");

    auto l = parse(tokenize("foreach i in [0:9] { t = f(i); v = g(t); }"));
    REQUIRE(l.statements.size() == 1);
    const auto& loop = std::get<ast::Foreach>(l.statements[0].node);
    CHECK(loop.index == "i");
    CHECK(loop.first == 0);
    CHECK(loop.last == 9);
    CHECK(loop.body.size() == 2);

    try {
        parse(tokenize("int x"));
        FAIL("no error");
    } catch (const SyntaxError& e) {
        CHECK(std::string(e.what()).find("end-of-input") != std::string::npos);
    }
    CHECK_THROWS_AS(parse(tokenize("int = 3;")), SyntaxError);
    CHECK_THROWS_AS(parse(tokenize("@priority(1) leaf (int o) f () native;")), SyntaxError);
}

TEST_CASE("leaf declarations") {
    auto d = parse_leaf_decl(
        tokenize("leaf (int o) f (int i, int j) package \"my_package\" \"1.0\" template \"set <<o>> [ f <<i>> <<j>> ]\";"));
    CHECK(d.binding.outputs.size() == 1);
    CHECK(d.binding.inputs.size() == 2);
    CHECK(d.binding.package == "my_package");
    CHECK(d.binding.version == "1.0");
    CHECK(d.binding.kind == ExecKind::Template);
    CHECK(d.binding.code == "set <<o>> [ f <<i>> <<j>> ]");
    REQUIRE(d.slots.size() == 3);
    CHECK(d.slots[0].name == "o");

    auto n = parse_leaf_decl(tokenize("leaf (float y) sin1 (float x) native;"));
    CHECK(n.binding.kind == ExecKind::Native);
    CHECK_FALSE(n.binding.code);

    CHECK_THROWS_AS(parse_leaf_decl(tokenize("leaf (int o) f (int i) template \"<<o>> = <<k>>\";")), DeclError);
    CHECK_THROWS_AS(parse_leaf_decl(tokenize("leaf (int o) f (int i) template \"puts <<i>>\";")), DeclError);
    CHECK_THROWS_AS(parse_leaf_decl(tokenize("leaf (int o) f (int o) native;")), DeclError);
    CHECK_THROWS_AS(parse_leaf_decl(tokenize("leaf (int o) f (int i) guest;")), DeclError);
}

TEST_CASE("template slots") {
    auto names = [](std::string_view t) {
        std::vector<std::string> out;
        for (const auto& s : extract_template_slots(t)) out.push_back(s.name);
        return out;
    };
    CHECK(names("set <<o>> [ f <<i>> <<j>> ]") == std::vector<std::string>{"o", "i", "j"});
    CHECK(names("puts hello").empty());
    CHECK(names("<<a>> + <<a>>") == std::vector<std::string>{"a", "a"});
    CHECK(extract_template_slots("x <<ab>>")[0].position == 2);
    CHECK_THROWS_AS(extract_template_slots("x <<open"), TemplateError);
    CHECK_THROWS_AS(extract_template_slots("x <<>>"), TemplateError);
}

TEST_CASE("resolve") {
    auto checked = compile_source(kFragment);
    CHECK(checked.program.statements.size() == 6);

    CHECK(resolve_error("leaf (int o) f () native; leaf (int o) g () native; int x; x = f(); x = g();") ==
          ResolveError::Kind::DoubleAssignment);
    CHECK(resolve_error("leaf (int o) g (int a, int b) native; int x = 1; int y = g(x);") ==
          ResolveError::Kind::Arity);
    CHECK(resolve_error("int y = q + 1;") == ResolveError::Kind::Unbound);
    CHECK(resolve_error("int y = h(1);") == ResolveError::Kind::Unbound);
    CHECK(resolve_error("int x; int y = x + 1;") == ResolveError::Kind::Unassigned);
    CHECK(resolve_error("int x = 1; float y = x;") == ResolveError::Kind::Type);
    CHECK(resolve_error("int x; x = 1; int x;") == ResolveError::Kind::Redeclared);
    CHECK(resolve_error("int a; int b; a = b + 1; b = a + 1;") == ResolveError::Kind::Cycle);
    CHECK(resolve_error("int t = 0; foreach i in [0:3] { t = i; }") == ResolveError::Kind::DoubleAssignment);
    CHECK(resolve_error("foreach i in [0:3] { i = 2; }") == ResolveError::Kind::DoubleAssignment);
    CHECK(resolve_error("int s = 1 + \"a\";") == ResolveError::Kind::Type);

    // Declared before use, assigned later: dataflow order, not statement order.
    CHECK_NOTHROW(compile_source("int a; int b = a * 2; a = 5;"));
    CHECK_NOTHROW(compile_source("foreach i in [0:9] { t = i + 1; v = t * 2; }"));
    CHECK_NOTHROW(compile_source(
        "leaf (int o) f (int a) native \"sleep_ms\";\n"
        "func (int r) twice (int a) { int b = f(a); r = b + b; }\n"
        "int q = twice(3);"));
}

TEST_CASE("pretty-print round trip over the corpus") {
    const char* corpus[] = {
        kFragment,
        "foreach i in [0:9] { t = f(i); v = g(t); }",
        "int a = -(3 - -4) * 2 / (1 + 1); float b = -1.5e-7; string s = \"q\\\"\\\\\\n\\t\";",
        "@priority(5) @target(2) int r = f(1, 2 - 3 - 4, (5 - 6) - 7);",
        "func (int r, string s) h (int a, blob b) { r = a; s = \"x\"; }",
        "leaf (int o) f (int i) package \"p\" \"2.1\" guest \"o = i\"; (a, b) = h(1, x);",
        "foreach k in [-3:-1] { foreach j in [0:0] { printf(\"%d %d\", j, k); } }",
    };
    for (const char* src : corpus) {
        CAPTURE(src);
        auto p = parse(tokenize(src));
        const std::string printed = ast::pretty_print(p);
        auto q = parse(tokenize(printed));
        CHECK(ast::to_sexpr(p) == ast::to_sexpr(q));
        CHECK(ast::pretty_print(q) == printed);
    }
}

TEST_CASE("pretty-print round trip over generated programs") {
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        auto g = progen::generate(seed);
        CAPTURE(g.source);
        auto p = parse(tokenize(g.source));
        auto q = parse(tokenize(ast::pretty_print(p)));
        REQUIRE(ast::to_sexpr(p) == ast::to_sexpr(q));
        CHECK_NOTHROW(resolve(std::move(q)));
    }
}

TEST_CASE("accepted leaf slots are a subset of the signature") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto p = parse(tokenize(progen::generate(seed).source));
        for (const auto& s : p.statements) {
            const auto* l = std::get_if<ast::LeafDecl>(&s.node);
            if (!l) continue;
            for (const auto& slot : l->slots) {
                bool found = false;
                for (const auto& prm : l->binding.inputs) found |= prm.name == slot.name;
                for (const auto& prm : l->binding.outputs) found |= prm.name == slot.name;
                CHECK(found);
            }
        }
    }
}
