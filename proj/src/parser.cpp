#include <charconv>
#include <cstdlib>

#include "miniflow/frontend.hpp"

namespace miniflow {

using namespace ast;

std::vector<TemplateSlot> extract_template_slots(std::string_view tmpl) {
    std::vector<TemplateSlot> slots;
    std::size_t pos = 0;
    while ((pos = tmpl.find("<<", pos)) != std::string_view::npos) {
        const std::size_t close = tmpl.find(">>", pos + 2);
        if (close == std::string_view::npos) {
            throw TemplateError("unbalanced '<<' at offset " + std::to_string(pos) +
                                ": no closing '>>'");
        }
        std::string_view name = tmpl.substr(pos + 2, close - pos - 2);
        while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
        while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
        bool ok = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
        for (char c : name) ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '_');
        if (!ok) {
            throw TemplateError("malformed template slot '<<" +
                                std::string(tmpl.substr(pos + 2, close - pos - 2)) +
                                ">>' at offset " + std::to_string(pos));
        }
        slots.push_back(TemplateSlot{std::string(name), pos});
        pos = close + 2;
    }
    return slots;
}

namespace {

class Parser {
public:
    explicit Parser(std::span<const Token> toks) : toks_(toks) {}

    Program program() {
        Program p;
        while (!at_end()) p.statements.push_back(statement());
        return p;
    }

    LeafDecl single_leaf_decl() {
        Stmt s = statement();
        if (!at_end()) fail("expected end of input after leaf declaration");
        auto* leaf = std::get_if<LeafDecl>(&s.node);
        if (!leaf) throw SyntaxError("expected a leaf declaration", s.loc);
        return std::move(*leaf);
    }

private:
    bool at_end() const { return pos_ >= toks_.size(); }
    const Token* cur() const { return at_end() ? nullptr : &toks_[pos_]; }

    SourceLoc loc() const {
        if (!at_end()) return toks_[pos_].loc;
        if (toks_.empty()) return SourceLoc{1, 1};
        const Token& last = toks_.back();
        return SourceLoc{last.loc.line, last.loc.column + static_cast<std::uint32_t>(last.text.size())};
    }

    [[noreturn]] void fail(const std::string& expected) const {
        if (at_end()) throw SyntaxError(expected + ", found end-of-input", loc());
        throw SyntaxError(expected + ", found " + std::string(token_kind_name(cur()->kind)) + " '" +
                              cur()->text + "'",
                          loc());
    }

    bool check(TokenKind k, std::string_view text = {}) const {
        return !at_end() && toks_[pos_].kind == k && (text.empty() || toks_[pos_].text == text);
    }
    bool check_punct(std::string_view p) const { return check(TokenKind::Punctuation, p); }
    bool check_kw(std::string_view k) const { return check(TokenKind::Keyword, k); }

    bool accept_punct(std::string_view p) {
        if (!check_punct(p)) return false;
        ++pos_;
        return true;
    }

    const Token& expect(TokenKind k, std::string_view text, std::string_view what) {
        if (!check(k, text)) fail("expected " + std::string(what));
        return toks_[pos_++];
    }
    void expect_punct(std::string_view p) { expect(TokenKind::Punctuation, p, "'" + std::string(p) + "'"); }
    std::string expect_ident() { return expect(TokenKind::Identifier, {}, "identifier").text; }

    bool check_type() const {
        return check_kw("int") || check_kw("float") || check_kw("string") || check_kw("blob");
    }
    ScalarType expect_type() {
        if (!check_type()) fail("expected a type");
        return *parse_type_name(toks_[pos_++].text);
    }

    std::int64_t signed_int() {
        bool neg = accept_punct("-");
        const Token& t = expect(TokenKind::IntLiteral, {}, "integer literal");
        std::int64_t v = 0;
        std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        return neg ? -v : v;
    }

    Annotations annotations() {
        Annotations a;
        while (check_punct("@")) {
            SourceLoc at = loc();
            ++pos_;
            std::string name = expect_ident();
            expect_punct("(");
            std::int64_t v = signed_int();
            expect_punct(")");
            if (name == "priority") {
                a.priority = v;
            } else if (name == "target") {
                a.target = v;
            } else {
                throw SyntaxError("unknown annotation '@" + name + "'", at);
            }
        }
        return a;
    }

    Stmt statement() {
        Stmt s;
        s.loc = loc();
        s.annotations = annotations();
        if (check_type()) {
            s.node = var_decl();
        } else if (check_kw("leaf")) {
            s.node = leaf_decl(s.loc);
        } else if (check_kw("func")) {
            s.node = func_def();
        } else if (check_kw("foreach")) {
            s.node = foreach_loop();
        } else if (check_punct("(")) {
            s.node = assign();
        } else if (check(TokenKind::Identifier)) {
            if (pos_ + 1 < toks_.size() && toks_[pos_ + 1].kind == TokenKind::Punctuation &&
                toks_[pos_ + 1].text == "(") {
                CallStmt c{expression()};
                expect_punct(";");
                s.node = std::move(c);
            } else {
                s.node = assign();
            }
        } else {
            fail("expected a statement");
        }
        if (!s.annotations.empty() && (std::holds_alternative<LeafDecl>(s.node) ||
                                       std::holds_alternative<FuncDef>(s.node))) {
            throw SyntaxError("annotations are not allowed on declarations", s.loc);
        }
        return s;
    }

    VarDecl var_decl() {
        VarDecl d;
        d.type = expect_type();
        d.name = expect_ident();
        if (accept_punct("=")) d.init = expression();
        expect_punct(";");
        return d;
    }

    Assign assign() {
        Assign a;
        if (accept_punct("(")) {
            a.targets.push_back(expect_ident());
            while (accept_punct(",")) a.targets.push_back(expect_ident());
            expect_punct(")");
        } else {
            a.targets.push_back(expect_ident());
        }
        expect_punct("=");
        a.value = expression();
        expect_punct(";");
        return a;
    }

    std::vector<Param> param_list() {
        std::vector<Param> ps;
        expect_punct("(");
        if (accept_punct(")")) return ps;
        do {
            Param p;
            p.type = expect_type();
            p.name = expect_ident();
            ps.push_back(std::move(p));
        } while (accept_punct(","));
        expect_punct(")");
        return ps;
    }

    std::string string_lit(std::string_view what) {
        return string_literal_value(expect(TokenKind::StringLiteral, {}, what));
    }

    LeafDecl leaf_decl(SourceLoc at) {
        expect(TokenKind::Keyword, "leaf", "'leaf'");
        LeafDecl d;
        LeafBinding& b = d.binding;
        b.outputs = param_list();
        b.name = expect_ident();
        b.inputs = param_list();
        if (check_kw("package")) {
            ++pos_;
            b.package = string_lit("package name");
            b.version = string_lit("package version");
        }
        if (check_kw("template")) {
            b.kind = ExecKind::Template;
        } else if (check_kw("native")) {
            b.kind = ExecKind::Native;
        } else if (check_kw("guest")) {
            b.kind = ExecKind::Guest;
        } else {
            fail("expected 'template', 'native' or 'guest'");
        }
        ++pos_;
        if (check(TokenKind::StringLiteral)) b.code = string_lit("code");
        expect_punct(";");
        validate_leaf(d, at);
        return d;
    }

    static void validate_leaf(LeafDecl& d, SourceLoc at) {
        const LeafBinding& b = d.binding;
        auto declared = [&](std::string_view n) {
            for (const auto& p : b.inputs) if (p.name == n) return true;
            for (const auto& p : b.outputs) if (p.name == n) return true;
            return false;
        };
        std::vector<std::string> seen;
        for (const auto* list : {&b.inputs, &b.outputs}) {
            for (const auto& p : *list) {
                for (const auto& s : seen) {
                    if (s == p.name) {
                        throw DeclError("leaf '" + b.name + "' declares '" + p.name + "' twice", at);
                    }
                }
                seen.push_back(p.name);
            }
        }
        if (b.kind == ExecKind::Native) {
            if (b.code && b.code->empty()) throw DeclError("empty native symbol name", at);
            return;
        }
        if (!b.code) {
            throw DeclError("leaf '" + b.name + "' of kind " + std::string(exec_kind_name(b.kind)) +
                                " requires code",
                            at);
        }
        try {
            d.slots = extract_template_slots(*b.code);
        } catch (const TemplateError& e) {
            throw DeclError("leaf '" + b.name + "': " + e.what(), at);
        }
        for (const auto& s : d.slots) {
            if (!declared(s.name)) {
                throw DeclError("leaf '" + b.name + "': template slot <<" + s.name +
                                    ">> is not in the signature",
                                at);
            }
        }
        if (b.kind == ExecKind::Template) {
            // Outputs are only reachable through their slots.
            for (const auto& o : b.outputs) {
                bool found = false;
                for (const auto& s : d.slots) found = found || s.name == o.name;
                if (!found) {
                    throw DeclError("leaf '" + b.name + "': output '" + o.name +
                                        "' has no template slot",
                                    at);
                }
            }
        }
    }

    FuncDef func_def() {
        expect(TokenKind::Keyword, "func", "'func'");
        FuncDef f;
        f.outputs = param_list();
        f.name = expect_ident();
        f.inputs = param_list();
        f.body = block();
        return f;
    }

    std::vector<Stmt> block() {
        expect_punct("{");
        std::vector<Stmt> body;
        while (!check_punct("}")) {
            if (at_end()) fail("expected '}'");
            body.push_back(statement());
        }
        ++pos_;
        return body;
    }

    Foreach foreach_loop() {
        expect(TokenKind::Keyword, "foreach", "'foreach'");
        Foreach f;
        f.index = expect_ident();
        expect(TokenKind::Keyword, "in", "'in'");
        expect_punct("[");
        f.first = signed_int();
        expect_punct(":");
        f.last = signed_int();
        expect_punct("]");
        f.body = block();
        return f;
    }

    Expr expression() {
        Expr lhs = term();
        while (check_punct("+") || check_punct("-")) {
            lhs = binary(std::move(lhs), [this] { return term(); });
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (check_punct("*") || check_punct("/")) {
            lhs = binary(std::move(lhs), [this] { return unary(); });
        }
        return lhs;
    }

    template <typename F>
    Expr binary(Expr lhs, F operand) {
        Expr e;
        e.loc = loc();
        Binary b;
        b.op = toks_[pos_++].text[0];
        b.operands.push_back(std::move(lhs));
        b.operands.push_back(operand());
        e.node = std::move(b);
        return e;
    }

    Expr unary() {
        if (check_punct("-")) {
            Expr e;
            e.loc = loc();
            ++pos_;
            Negate n;
            n.operand.push_back(unary());
            e.node = std::move(n);
            return e;
        }
        return primary();
    }

    Expr primary() {
        Expr e;
        e.loc = loc();
        if (check(TokenKind::IntLiteral)) {
            const Token& t = toks_[pos_++];
            std::int64_t v = 0;
            std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
            e.node = IntLit{v};
        } else if (check(TokenKind::FloatLiteral)) {
            e.node = FloatLit{std::strtod(toks_[pos_++].text.c_str(), nullptr)};
        } else if (check(TokenKind::StringLiteral)) {
            e.node = StringLit{string_literal_value(toks_[pos_++])};
        } else if (check(TokenKind::Identifier)) {
            std::string name = toks_[pos_++].text;
            if (accept_punct("(")) {
                Call c;
                c.callee = std::move(name);
                if (!accept_punct(")")) {
                    do {
                        c.args.push_back(expression());
                    } while (accept_punct(","));
                    expect_punct(")");
                }
                e.node = std::move(c);
            } else {
                e.node = VarRef{std::move(name)};
            }
        } else if (accept_punct("(")) {
            e = expression();
            expect_punct(")");
        } else {
            fail("expected an expression");
        }
        return e;
    }

    std::span<const Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

Program parse(std::span<const Token> tokens) { return Parser(tokens).program(); }

LeafDecl parse_leaf_decl(std::span<const Token> tokens) { return Parser(tokens).single_leaf_decl(); }

std::string_view exec_kind_name(ExecKind k) noexcept {
    switch (k) {
        case ExecKind::Template: return "template";
        case ExecKind::Native: return "native";
        case ExecKind::Guest: return "guest";
    }
    return "?";
}

}  // namespace miniflow
