#include "miniflow/toy.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "miniflow/errors.hpp"

namespace miniflow::toy {

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct FunctionDef {
    std::string name;
    std::vector<std::string> params;
    std::vector<NodePtr> body;
};

std::string_view ToyValue::type_name() const noexcept {
    switch (v.index()) {
        case 0: return "nil";
        case 1: return "int";
        case 2: return "float";
        case 3: return "str";
        case 4: return "blob";
        case 5: return "list";
        case 6: return "function";
    }
    return "?";
}

namespace {

// ---------------------------------------------------------------- lexing

enum class Tok { Int, Float, Str, Name, Op, Newline, End };

struct Token {
    Tok kind;
    std::string text;
    int line;
};

[[noreturn]] void fail(int line, const std::string& msg) {
    throw GuestError("line " + std::to_string(line) + ": " + msg);
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    int line = 1;
    int depth = 0;  // () and [] nesting; newlines inside are whitespace
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (c == '\n') {
            if (depth == 0) out.push_back({Tok::Newline, "\n", line});
            ++line;
            ++i;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
        } else if (c == '#') {
            while (i < src.size() && src[i] != '\n') ++i;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            bool is_float = false;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j + 1 < src.size() && src[j] == '.' && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
                is_float = true;
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    is_float = true;
                    j = k;
                    while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                }
            }
            out.push_back({is_float ? Tok::Float : Tok::Int, std::string(src.substr(i, j - i)), line});
            i = j;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            out.push_back({Tok::Name, std::string(src.substr(i, j - i)), line});
            i = j;
        } else if (c == '"') {
            std::string s;
            const int start = line;
            ++i;
            while (true) {
                if (i >= src.size()) fail(start, "unterminated string");
                char d = src[i];
                if (d == '"') {
                    ++i;
                    break;
                }
                if (d == '\n') ++line;
                if (d == '\\') {
                    if (i + 1 >= src.size()) fail(line, "unterminated string");
                    char e = src[i + 1];
                    i += 2;
                    switch (e) {
                        case 'n': s += '\n'; break;
                        case 't': s += '\t'; break;
                        case 'r': s += '\r'; break;
                        case '"': s += '"'; break;
                        case '\\': s += '\\'; break;
                        case 'x': {
                            int h = i + 1 < src.size() ? hex_digit(src[i]) : -1;
                            int l = i + 1 < src.size() ? hex_digit(src[i + 1]) : -1;
                            if (h < 0 || l < 0) fail(line, "bad \\x escape");
                            s += static_cast<char>(h * 16 + l);
                            i += 2;
                            break;
                        }
                        default: fail(line, std::string("unknown escape \\") + e);
                    }
                    continue;
                }
                s += d;
                ++i;
            }
            out.push_back({Tok::Str, std::move(s), start});
        } else {
            static constexpr std::string_view two[] = {"==", "!=", "<=", ">="};
            std::string op(1, c);
            for (auto t : two) {
                if (src.substr(i, 2) == t) op = std::string(t);
            }
            static constexpr std::string_view singles = "(){}[],;=<>+-*/%";
            if (op.size() == 1 && singles.find(c) == std::string_view::npos) {
                fail(line, std::string("unexpected character '") + c + "'");
            }
            if (c == '(' || c == '[') ++depth;
            if ((c == ')' || c == ']') && depth > 0) --depth;
            out.push_back({Tok::Op, op, line});
            i += op.size();
        }
    }
    out.push_back({Tok::End, "", line});
    return out;
}

}  // namespace

// ---------------------------------------------------------------- syntax

enum class K {
    Lit, Var, Call, Index, List, Neg, Not, Binary, And, Or,
    Assign, If, While, Def, Return, Expr,
};

struct Node {
    K kind;
    int line = 0;
    ToyValue literal;
    std::string name;  // variable, callee, operator
    std::vector<NodePtr> kids;
    std::vector<NodePtr> else_body;
    std::shared_ptr<const FunctionDef> def;
};

NodePtr make(K k, int line) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->line = line;
    return n;
}

namespace {

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

    std::vector<NodePtr> program() {
        auto body = statements();
        if (cur().kind != Tok::End) fail(cur().line, "unexpected '" + cur().text + "'");
        return body;
    }

private:
    const Token& cur() const { return t_[p_]; }
    bool is_op(std::string_view s) const { return cur().kind == Tok::Op && cur().text == s; }
    bool is_kw(std::string_view s) const { return cur().kind == Tok::Name && cur().text == s; }
    void expect_op(std::string_view s) {
        if (!is_op(s)) fail(cur().line, "expected '" + std::string(s) + "', found '" + describe() + "'");
        ++p_;
    }
    std::string describe() const {
        if (cur().kind == Tok::End) return "end of input";
        if (cur().kind == Tok::Newline) return "newline";
        return cur().text;
    }
    void skip_separators() {
        while (cur().kind == Tok::Newline || is_op(";")) ++p_;
    }

    std::vector<NodePtr> statements() {
        std::vector<NodePtr> out;
        skip_separators();
        while (cur().kind != Tok::End && !is_op("}")) {
            out.push_back(statement());
            if (cur().kind != Tok::End && !is_op("}") && cur().kind != Tok::Newline && !is_op(";")) {
                fail(cur().line, "expected end of statement, found '" + describe() + "'");
            }
            skip_separators();
        }
        return out;
    }

    std::vector<NodePtr> block() {
        expect_op("{");
        auto body = statements();
        expect_op("}");
        return body;
    }

    NodePtr statement() {
        const int line = cur().line;
        if (is_kw("if")) {
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::If;
            n->line = line;
            n->kids.push_back(expr());
            auto then_body = block();
            n->kids.insert(n->kids.end(), then_body.begin(), then_body.end());
            std::size_t save = p_;
            while (cur().kind == Tok::Newline) ++p_;
            if (is_kw("else")) {
                ++p_;
                if (is_kw("if")) {
                    n->else_body.push_back(statement());
                } else {
                    n->else_body = block();
                }
            } else {
                p_ = save;
            }
            return n;
        }
        if (is_kw("while")) {
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::While;
            n->line = line;
            n->kids.push_back(expr());
            auto body = block();
            n->kids.insert(n->kids.end(), body.begin(), body.end());
            return n;
        }
        if (is_kw("def")) {
            ++p_;
            auto def = std::make_shared<FunctionDef>();
            if (cur().kind != Tok::Name) fail(line, "expected function name");
            def->name = t_[p_++].text;
            expect_op("(");
            if (!is_op(")")) {
                do {
                    if (cur().kind != Tok::Name) fail(cur().line, "expected parameter name");
                    def->params.push_back(t_[p_++].text);
                } while (is_op(",") && (++p_, true));
            }
            expect_op(")");
            def->body = block();
            auto n = std::make_shared<Node>();
            n->kind = K::Def;
            n->line = line;
            n->name = def->name;
            n->def = std::move(def);
            return n;
        }
        if (is_kw("return")) {
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::Return;
            n->line = line;
            if (cur().kind != Tok::Newline && cur().kind != Tok::End && !is_op(";") && !is_op("}")) {
                n->kids.push_back(expr());
            }
            return n;
        }
        if (cur().kind == Tok::Name && t_[p_ + 1].kind == Tok::Op && t_[p_ + 1].text == "=") {
            auto n = std::make_shared<Node>();
            n->kind = K::Assign;
            n->line = line;
            n->name = t_[p_].text;
            p_ += 2;
            n->kids.push_back(expr());
            return n;
        }
        auto n = std::make_shared<Node>();
        n->kind = K::Expr;
        n->line = line;
        n->kids.push_back(expr());
        return n;
    }

    NodePtr expr() { return or_expr(); }

    NodePtr or_expr() {
        auto l = and_expr();
        while (is_kw("or")) {
            const int line = cur().line;
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::Or;
            n->line = line;
            n->kids = {l, and_expr()};
            l = n;
        }
        return l;
    }

    NodePtr and_expr() {
        auto l = not_expr();
        while (is_kw("and")) {
            const int line = cur().line;
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::And;
            n->line = line;
            n->kids = {l, not_expr()};
            l = n;
        }
        return l;
    }

    NodePtr not_expr() {
        if (is_kw("not")) {
            const int line = cur().line;
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::Not;
            n->line = line;
            n->kids = {not_expr()};
            return n;
        }
        return comparison();
    }

    NodePtr comparison() {
        auto l = additive();
        for (std::string_view op : {"==", "!=", "<", "<=", ">", ">="}) {
            if (is_op(op)) {
                return binary(l, [this] { return additive(); });
            }
        }
        return l;
    }

    template <typename F>
    NodePtr binary(NodePtr l, F next) {
        auto n = std::make_shared<Node>();
        n->kind = K::Binary;
        n->line = cur().line;
        n->name = t_[p_++].text;
        n->kids = {std::move(l), next()};
        return n;
    }

    NodePtr additive() {
        auto l = multiplicative();
        while (is_op("+") || is_op("-")) l = binary(l, [this] { return multiplicative(); });
        return l;
    }

    NodePtr multiplicative() {
        auto l = unary();
        while (is_op("*") || is_op("/") || is_op("%")) l = binary(l, [this] { return unary(); });
        return l;
    }

    NodePtr unary() {
        if (is_op("-")) {
            const int line = cur().line;
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::Neg;
            n->line = line;
            n->kids = {unary()};
            return n;
        }
        return postfix();
    }

    NodePtr postfix() {
        auto e = primary();
        while (is_op("[")) {
            const int line = cur().line;
            ++p_;
            auto n = std::make_shared<Node>();
            n->kind = K::Index;
            n->line = line;
            n->kids = {e, expr()};
            expect_op("]");
            e = n;
        }
        return e;
    }

    NodePtr primary() {
        const Token& t = cur();
        auto n = std::make_shared<Node>();
        n->line = t.line;
        switch (t.kind) {
            case Tok::Int: {
                std::int64_t v = 0;
                auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
                if (ec != std::errc{}) fail(t.line, "integer literal out of range: " + t.text);
                n->kind = K::Lit;
                n->literal.v = v;
                ++p_;
                return n;
            }
            case Tok::Float:
                n->kind = K::Lit;
                n->literal.v = std::strtod(t.text.c_str(), nullptr);
                ++p_;
                return n;
            case Tok::Str:
                n->kind = K::Lit;
                n->literal.v = t.text;
                ++p_;
                return n;
            case Tok::Name:
                ++p_;
                if (t.text == "nil") {
                    n->kind = K::Lit;
                    return n;
                }
                n->name = t.text;
                if (is_op("(")) {
                    ++p_;
                    n->kind = K::Call;
                    if (!is_op(")")) {
                        do {
                            n->kids.push_back(expr());
                        } while (is_op(",") && (++p_, true));
                    }
                    expect_op(")");
                } else {
                    n->kind = K::Var;
                }
                return n;
            case Tok::Op:
                if (t.text == "(") {
                    ++p_;
                    auto e = expr();
                    expect_op(")");
                    return e;
                }
                if (t.text == "[") {
                    ++p_;
                    n->kind = K::List;
                    if (!is_op("]")) {
                        do {
                            n->kids.push_back(expr());
                        } while (is_op(",") && (++p_, true));
                    }
                    expect_op("]");
                    return n;
                }
                break;
            default: break;
        }
        fail(t.line, "expected an expression, found '" + describe() + "'");
    }

    std::vector<Token> t_;
    std::size_t p_ = 0;
};

// ---------------------------------------------------------------- values

std::string to_str(const ToyValue& x);

bool truthy(const ToyValue& x) {
    switch (x.v.index()) {
        case 0: return false;
        case 1: return std::get<std::int64_t>(x.v) != 0;
        case 2: return std::get<double>(x.v) != 0.0;
        case 3: return !std::get<std::string>(x.v).empty();
        case 4: return std::get<Blob>(x.v).size() != 0;
        case 5: return !std::get<std::shared_ptr<const ToyList>>(x.v)->empty();
        default: return true;
    }
}

std::string to_str(const ToyValue& x) {
    switch (x.v.index()) {
        case 0: return "nil";
        case 1: return std::to_string(std::get<std::int64_t>(x.v));
        case 2: return format_float(std::get<double>(x.v));
        case 3: return std::get<std::string>(x.v);
        case 4: return display(Value(std::get<Blob>(x.v)));
        case 5: {
            std::string s = "[";
            const auto& l = *std::get<std::shared_ptr<const ToyList>>(x.v);
            for (std::size_t i = 0; i < l.size(); ++i) {
                if (i) s += ", ";
                s += l[i].v.index() == 3 ? quote_string(std::get<std::string>(l[i].v)) : to_str(l[i]);
            }
            return s + "]";
        }
        default: return "<function " + std::get<std::shared_ptr<const FunctionDef>>(x.v)->name + ">";
    }
}

bool equal(const ToyValue& a, const ToyValue& b);

bool equal(const ToyValue& a, const ToyValue& b) {
    const auto ai = a.v.index();
    const auto bi = b.v.index();
    if ((ai == 1 || ai == 2) && (bi == 1 || bi == 2)) {
        if (ai == 1 && bi == 1) return std::get<std::int64_t>(a.v) == std::get<std::int64_t>(b.v);
        auto num = [](const ToyValue& x) {
            return x.v.index() == 1 ? static_cast<double>(std::get<std::int64_t>(x.v))
                                    : std::get<double>(x.v);
        };
        return num(a) == num(b);
    }
    if (ai != bi) return false;
    if (ai == 5) {
        const auto& la = *std::get<5>(a.v);
        const auto& lb = *std::get<5>(b.v);
        if (la.size() != lb.size()) return false;
        for (std::size_t i = 0; i < la.size(); ++i) {
            if (!equal(la[i], lb[i])) return false;
        }
        return true;
    }
    if (ai == 6) return std::get<6>(a.v) == std::get<6>(b.v);
    return a.v == b.v;
}

ToyValue make_int(std::int64_t i) { return ToyValue{i}; }
ToyValue make_float(double d) { return ToyValue{d}; }
ToyValue make_list(ToyList l) { return ToyValue{std::make_shared<const ToyList>(std::move(l))}; }

}  // namespace

// ---------------------------------------------------------------- evaluation

struct Interpreter::Impl {
    std::map<std::string, ToyValue> globals;
    std::vector<std::map<std::string, ToyValue>> frames;
    std::optional<ToyValue> returning;

    [[noreturn]] static void err(const Node& n, const std::string& msg) { fail(n.line, msg); }

    const ToyValue* find(const std::string& name) const {
        if (!frames.empty()) {
            if (auto it = frames.back().find(name); it != frames.back().end()) return &it->second;
        }
        if (auto it = globals.find(name); it != globals.end()) return &it->second;
        return nullptr;
    }

    void assign(const std::string& name, ToyValue v) {
        if (frames.empty()) {
            globals[name] = std::move(v);
        } else {
            frames.back()[name] = std::move(v);
        }
    }

    void run(const std::vector<NodePtr>& body) {
        for (const auto& s : body) {
            exec(*s);
            if (returning) return;
        }
    }

    void exec(const Node& n) {
        switch (n.kind) {
            case K::Assign: assign(n.name, eval(*n.kids[0])); break;
            case K::Expr: eval(*n.kids[0]); break;
            case K::If: {
                if (truthy(eval(*n.kids[0]))) {
                    for (std::size_t i = 1; i < n.kids.size() && !returning; ++i) exec(*n.kids[i]);
                } else {
                    run(n.else_body);
                }
                break;
            }
            case K::While: {
                while (!returning && truthy(eval(*n.kids[0]))) {
                    for (std::size_t i = 1; i < n.kids.size() && !returning; ++i) exec(*n.kids[i]);
                }
                break;
            }
            case K::Def: assign(n.name, ToyValue{n.def}); break;
            case K::Return: {
                if (frames.empty()) err(n, "'return' outside a function");
                returning = n.kids.empty() ? ToyValue{} : eval(*n.kids[0]);
                break;
            }
            default: eval(n);
        }
    }

    ToyValue eval(const Node& n) {
        switch (n.kind) {
            case K::Lit: return n.literal;
            case K::Var: {
                const ToyValue* v = find(n.name);
                if (!v) err(n, "undefined variable '" + n.name + "'");
                return *v;
            }
            case K::List: {
                ToyList l;
                for (const auto& k : n.kids) l.push_back(eval(*k));
                return make_list(std::move(l));
            }
            case K::Neg: {
                ToyValue x = eval(*n.kids[0]);
                if (auto* i = std::get_if<std::int64_t>(&x.v)) {
                    return make_int(static_cast<std::int64_t>(0 - static_cast<std::uint64_t>(*i)));
                }
                if (auto* d = std::get_if<double>(&x.v)) return make_float(-*d);
                err(n, "cannot negate " + std::string(x.type_name()));
            }
            case K::Not: return make_int(truthy(eval(*n.kids[0])) ? 0 : 1);
            case K::And: {
                ToyValue l = eval(*n.kids[0]);
                return truthy(l) ? eval(*n.kids[1]) : l;
            }
            case K::Or: {
                ToyValue l = eval(*n.kids[0]);
                return truthy(l) ? l : eval(*n.kids[1]);
            }
            case K::Index: return index(n, eval(*n.kids[0]), eval(*n.kids[1]));
            case K::Binary: return binary(n, eval(*n.kids[0]), eval(*n.kids[1]));
            case K::Call: return call(n);
            default: err(n, "statement used as expression");
        }
    }

    ToyValue index(const Node& n, const ToyValue& target, const ToyValue& idx) {
        const auto* i = std::get_if<std::int64_t>(&idx.v);
        if (!i) err(n, "index must be int, not " + std::string(idx.type_name()));
        if (const auto* l = std::get_if<std::shared_ptr<const ToyList>>(&target.v)) {
            if (*i < 0 || static_cast<std::size_t>(*i) >= (*l)->size()) err(n, "list index out of range");
            return (**l)[static_cast<std::size_t>(*i)];
        }
        if (const auto* s = std::get_if<std::string>(&target.v)) {
            if (*i < 0 || static_cast<std::size_t>(*i) >= s->size()) err(n, "string index out of range");
            return ToyValue{std::string(1, (*s)[static_cast<std::size_t>(*i)])};
        }
        err(n, std::string(target.type_name()) + " is not indexable");
    }

    ToyValue binary(const Node& n, const ToyValue& a, const ToyValue& b) {
        const std::string& op = n.name;
        if (op == "==") return make_int(equal(a, b));
        if (op == "!=") return make_int(!equal(a, b));

        const auto* ai = std::get_if<std::int64_t>(&a.v);
        const auto* bi = std::get_if<std::int64_t>(&b.v);
        const bool anum = ai || std::holds_alternative<double>(a.v);
        const bool bnum = bi || std::holds_alternative<double>(b.v);

        if (op == "<" || op == "<=" || op == ">" || op == ">=") {
            int cmp;
            if (ai && bi) {
                cmp = *ai < *bi ? -1 : (*ai > *bi ? 1 : 0);
            } else if (anum && bnum) {
                double x = ai ? static_cast<double>(*ai) : std::get<double>(a.v);
                double y = bi ? static_cast<double>(*bi) : std::get<double>(b.v);
                if (std::isnan(x) || std::isnan(y)) return make_int(0);
                cmp = x < y ? -1 : (x > y ? 1 : 0);
            } else if (a.v.index() == 3 && b.v.index() == 3) {
                cmp = std::get<std::string>(a.v).compare(std::get<std::string>(b.v));
                cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
            } else {
                err(n, "cannot compare " + std::string(a.type_name()) + " and " + std::string(b.type_name()));
            }
            if (op == "<") return make_int(cmp < 0);
            if (op == "<=") return make_int(cmp <= 0);
            if (op == ">") return make_int(cmp > 0);
            return make_int(cmp >= 0);
        }

        if (op == "+" && a.v.index() == 3 && b.v.index() == 3) {
            return ToyValue{std::get<std::string>(a.v) + std::get<std::string>(b.v)};
        }
        if (op == "+" && a.v.index() == 5 && b.v.index() == 5) {
            ToyList l = *std::get<5>(a.v);
            const auto& r = *std::get<5>(b.v);
            l.insert(l.end(), r.begin(), r.end());
            return make_list(std::move(l));
        }
        if (!anum || !bnum) {
            err(n, "unsupported operand types for " + op + ": " + std::string(a.type_name()) +
                       " and " + std::string(b.type_name()));
        }
        if (ai && bi) {
            const auto x = static_cast<std::uint64_t>(*ai);
            const auto y = static_cast<std::uint64_t>(*bi);
            if (op == "+") return make_int(static_cast<std::int64_t>(x + y));
            if (op == "-") return make_int(static_cast<std::int64_t>(x - y));
            if (op == "*") return make_int(static_cast<std::int64_t>(x * y));
            if (*bi == 0) err(n, "division by zero");
            if (*ai == INT64_MIN && *bi == -1) return make_int(op == "/" ? INT64_MIN : 0);
            if (op == "/") return make_int(*ai / *bi);
            return make_int(*ai % *bi);
        }
        const double x = ai ? static_cast<double>(*ai) : std::get<double>(a.v);
        const double y = bi ? static_cast<double>(*bi) : std::get<double>(b.v);
        if (op == "+") return make_float(x + y);
        if (op == "-") return make_float(x - y);
        if (op == "*") return make_float(x * y);
        if (y == 0.0) err(n, "division by zero");
        if (op == "/") return make_float(x / y);
        return make_float(std::fmod(x, y));
    }

    void arity(const Node& n, std::size_t want) {
        if (n.kids.size() != want) {
            err(n, n.name + "() takes " + std::to_string(want) + " arguments, got " +
                       std::to_string(n.kids.size()));
        }
    }

    static double as_number(const Node& n, const ToyValue& x) {
        if (const auto* i = std::get_if<std::int64_t>(&x.v)) return static_cast<double>(*i);
        if (const auto* d = std::get_if<double>(&x.v)) return *d;
        err(n, "expected a number, got " + std::string(x.type_name()));
    }

    static const Blob& as_blob(const Node& n, const ToyValue& x) {
        if (const auto* b = std::get_if<Blob>(&x.v)) return *b;
        err(n, n.name + "() expects a blob, got " + std::string(x.type_name()));
    }

    static std::int64_t as_int(const Node& n, const ToyValue& x) {
        if (const auto* i = std::get_if<std::int64_t>(&x.v)) return *i;
        err(n, n.name + "() expects an int, got " + std::string(x.type_name()));
    }

    ToyValue call(const Node& n) {
        const std::string& f = n.name;
        if (const ToyValue* v = find(f)) {
            if (const auto* def = std::get_if<std::shared_ptr<const FunctionDef>>(&v->v)) {
                return call_user(n, **def);
            }
            err(n, "'" + f + "' is not a function");
        }
        std::vector<ToyValue> args;
        args.reserve(n.kids.size());
        if (f != "defined") {
            for (const auto& k : n.kids) args.push_back(eval(*k));
        }
        try {
            return builtin(n, f, args);
        } catch (const BlobError& e) {
            err(n, f + "(): " + e.what());
        }
    }

    ToyValue call_user(const Node& n, const FunctionDef& def) {
        if (n.kids.size() != def.params.size()) {
            err(n, def.name + "() takes " + std::to_string(def.params.size()) + " arguments, got " +
                       std::to_string(n.kids.size()));
        }
        if (frames.size() >= 200) err(n, "maximum recursion depth exceeded");
        std::map<std::string, ToyValue> frame;
        for (std::size_t i = 0; i < def.params.size(); ++i) frame[def.params[i]] = eval(*n.kids[i]);
        frames.push_back(std::move(frame));
        try {
            run(def.body);
        } catch (...) {
            frames.pop_back();
            returning.reset();
            throw;
        }
        frames.pop_back();
        ToyValue out = returning.value_or(ToyValue{});
        returning.reset();
        return out;
    }

    ToyValue builtin(const Node& n, const std::string& f, const std::vector<ToyValue>& a) {
        if (f == "len") {
            arity(n, 1);
            switch (a[0].v.index()) {
                case 3: return make_int(static_cast<std::int64_t>(std::get<3>(a[0].v).size()));
                case 4: return make_int(static_cast<std::int64_t>(std::get<4>(a[0].v).size()));
                case 5: return make_int(static_cast<std::int64_t>(std::get<5>(a[0].v)->size()));
                default: err(n, "len() of " + std::string(a[0].type_name()));
            }
        }
        if (f == "str") {
            arity(n, 1);
            return ToyValue{to_str(a[0])};
        }
        if (f == "int") {
            arity(n, 1);
            if (const auto* i = std::get_if<std::int64_t>(&a[0].v)) return make_int(*i);
            if (const auto* d = std::get_if<double>(&a[0].v)) {
                if (!std::isfinite(*d) || std::fabs(*d) >= 9.2e18) err(n, "int() of " + format_float(*d));
                return make_int(static_cast<std::int64_t>(*d));
            }
            if (const auto* s = std::get_if<std::string>(&a[0].v)) {
                std::int64_t v = 0;
                auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
                if (ec != std::errc{} || p != s->data() + s->size()) err(n, "invalid int literal " + quote_string(*s));
                return make_int(v);
            }
            err(n, "int() of " + std::string(a[0].type_name()));
        }
        if (f == "float") {
            arity(n, 1);
            if (const auto* s = std::get_if<std::string>(&a[0].v)) {
                if (*s == "nan") return make_float(std::nan(""));
                if (*s == "inf") return make_float(HUGE_VAL);
                if (*s == "-inf") return make_float(-HUGE_VAL);
                char* end = nullptr;
                double d = std::strtod(s->c_str(), &end);
                if (s->empty() || end != s->c_str() + s->size()) err(n, "invalid float literal " + quote_string(*s));
                return make_float(d);
            }
            return make_float(as_number(n, a[0]));
        }
        if (f == "float_bits") {
            // Exact float from its IEEE-754 bit pattern (preserves NaN payloads).
            arity(n, 1);
            return make_float(std::bit_cast<double>(static_cast<std::uint64_t>(as_int(n, a[0]))));
        }
        if (f == "sqrt") {
            arity(n, 1);
            return make_float(std::sqrt(as_number(n, a[0])));
        }
        if (f == "abs") {
            arity(n, 1);
            if (const auto* i = std::get_if<std::int64_t>(&a[0].v)) return make_int(*i < 0 ? -*i : *i);
            return make_float(std::fabs(as_number(n, a[0])));
        }
        if (f == "type") {
            arity(n, 1);
            return ToyValue{std::string(a[0].type_name())};
        }
        if (f == "error") {
            arity(n, 1);
            err(n, to_str(a[0]));
        }
        if (f == "defined") {
            arity(n, 1);
            if (n.kids[0]->kind != K::Lit || n.kids[0]->literal.v.index() != 3) {
                err(n, "defined() expects a string literal");
            }
            return make_int(find(std::get<std::string>(n.kids[0]->literal.v)) != nullptr);
        }
        if (f == "append") {
            arity(n, 2);
            const auto* l = std::get_if<std::shared_ptr<const ToyList>>(&a[0].v);
            if (!l) err(n, "append() expects a list");
            ToyList out = **l;
            out.push_back(a[1]);
            return make_list(std::move(out));
        }
        if (f == "range") {
            if (a.empty() || a.size() > 2) err(n, "range() takes 1 or 2 arguments");
            std::int64_t lo = a.size() == 2 ? as_int(n, a[0]) : 0;
            std::int64_t hi = as_int(n, a.back());
            if (hi - lo > 10'000'000) err(n, "range() too large");
            ToyList l;
            for (std::int64_t i = lo; i < hi; ++i) l.push_back(make_int(i));
            return make_list(std::move(l));
        }
        if (f == "byte") {
            arity(n, 2);
            return make_int(byte_at(as_blob(n, a[0]), static_cast<std::size_t>(as_int(n, a[1]))));
        }
        if (f == "f64") {
            arity(n, 2);
            const std::int64_t i = as_int(n, a[1]);
            if (i < 0) err(n, "f64() index out of range");
            return make_float(f64_at(as_blob(n, a[0]), static_cast<std::size_t>(i)));
        }
        if (f == "f64count") {
            arity(n, 1);
            const Blob& b = as_blob(n, a[0]);
            if (b.elem_type() != ElemType::F64) {
                err(n, "f64count() needs an f64 blob, got " + std::string(elem_type_name(b.elem_type())));
            }
            return make_int(static_cast<std::int64_t>(b.size() / 8));
        }
        if (f == "blob_from_string") {
            arity(n, 1);
            const auto* s = std::get_if<std::string>(&a[0].v);
            if (!s) err(n, "blob_from_string() expects a str");
            return ToyValue{blob_of_string(*s)};
        }
        if (f == "string_of_blob") {
            arity(n, 1);
            return ToyValue{string_of_blob(as_blob(n, a[0]))};
        }
        if (f == "blob_f64") {
            arity(n, 1);
            const auto* l = std::get_if<std::shared_ptr<const ToyList>>(&a[0].v);
            if (!l) err(n, "blob_f64() expects a list");
            std::vector<double> xs;
            for (const auto& x : **l) xs.push_back(as_number(n, x));
            return ToyValue{blob_of_f64s(xs)};
        }
        err(n, "undefined function '" + f + "'");
    }
};

Interpreter::Interpreter() : impl_(std::make_unique<Impl>()) {}
Interpreter::~Interpreter() = default;
Interpreter::Interpreter(Interpreter&&) noexcept = default;
Interpreter& Interpreter::operator=(Interpreter&&) noexcept = default;

void Interpreter::eval(std::string_view code) {
    auto body = Parser(lex(code)).program();
    impl_->frames.clear();
    impl_->returning.reset();
    impl_->run(body);
    impl_->returning.reset();
}

void Interpreter::set(const std::string& name, ToyValue v) { impl_->globals[name] = std::move(v); }

std::optional<ToyValue> Interpreter::get(const std::string& name) const {
    auto it = impl_->globals.find(name);
    if (it == impl_->globals.end()) return std::nullopt;
    return it->second;
}

void Interpreter::erase(const std::string& name) { impl_->globals.erase(name); }

std::size_t Interpreter::global_count() const { return impl_->globals.size(); }

// ---------------------------------------------------------------- marshaling

ToyValue marshal(const Value& v) {
    return std::visit([](const auto& x) { return ToyValue{x}; }, v);
}

Value unmarshal(const ToyValue& g, ScalarType expected) {
    auto mismatch = [&]() -> TypeError {
        return TypeError("expected " + std::string(type_name(expected)) + ", guest value is " +
                         std::string(g.type_name()));
    };
    switch (expected) {
        case ScalarType::Int:
            if (const auto* i = std::get_if<std::int64_t>(&g.v)) return *i;
            throw mismatch();
        case ScalarType::Float:
            if (const auto* d = std::get_if<double>(&g.v)) return *d;
            throw mismatch();
        case ScalarType::String:
            if (const auto* s = std::get_if<std::string>(&g.v)) return *s;
            throw mismatch();
        case ScalarType::Blob:
            if (const auto* b = std::get_if<Blob>(&g.v)) return *b;
            throw mismatch();
    }
    throw mismatch();
}

std::string render_literal(const Value& v) {
    switch (type_of(v)) {
        case ScalarType::Int: {
            const auto i = std::get<std::int64_t>(v);
            if (i == INT64_MIN) return "(-9223372036854775807 - 1)";
            return std::to_string(i);
        }
        case ScalarType::Float: {
            const double d = std::get<double>(v);
            if (std::isnan(d)) {
                return "float_bits(" + std::to_string(static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(d))) + ")";
            }
            if (std::isinf(d)) return d < 0 ? "(-float(\"inf\"))" : "float(\"inf\")";
            std::string s = format_float(d);
            return s[0] == '-' ? "(" + s + ")" : s;
        }
        case ScalarType::String: return quote_string(std::get<std::string>(v));
        case ScalarType::Blob: break;
    }
    throw TypeError("blob values have no literal form; bind them as variables");
}

}  // namespace miniflow::toy
