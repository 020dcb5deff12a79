#include "miniflow/ast.hpp"

namespace miniflow::ast {

namespace {

std::string script_quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out + "\"";
}

std::string params_str(const std::vector<Param>& ps) {
    std::string s = "(";
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (i) s += ", ";
        s += type_name(ps[i].type);
        s += ' ';
        s += ps[i].name;
    }
    return s + ")";
}

void sexpr(const Expr& e, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, IntLit>) {
                out += "(int " + std::to_string(n.value) + ")";
            } else if constexpr (std::is_same_v<T, FloatLit>) {
                out += "(float " + format_float(n.value) + ")";
            } else if constexpr (std::is_same_v<T, StringLit>) {
                out += "(str " + script_quote(n.value) + ")";
            } else if constexpr (std::is_same_v<T, VarRef>) {
                out += "(var " + n.name + ")";
            } else if constexpr (std::is_same_v<T, Call>) {
                out += "(call " + n.callee;
                for (const auto& a : n.args) {
                    out += ' ';
                    sexpr(a, out);
                }
                out += ")";
            } else if constexpr (std::is_same_v<T, Binary>) {
                out += std::string("(") + n.op + ' ';
                sexpr(n.operands[0], out);
                out += ' ';
                sexpr(n.operands[1], out);
                out += ")";
            } else {
                out += "(neg ";
                sexpr(n.operand[0], out);
                out += ")";
            }
        },
        e.node);
}

void sexpr(const std::vector<Stmt>& body, std::string& out);

void sexpr(const Stmt& s, std::string& out) {
    if (s.annotations.priority) out += "@priority " + std::to_string(*s.annotations.priority) + " ";
    if (s.annotations.target) out += "@target " + std::to_string(*s.annotations.target) + " ";
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarDecl>) {
                out += "(decl " + std::string(type_name(n.type)) + " " + n.name;
                if (n.init) {
                    out += ' ';
                    sexpr(*n.init, out);
                }
                out += ")";
            } else if constexpr (std::is_same_v<T, Assign>) {
                out += "(assign (";
                for (std::size_t i = 0; i < n.targets.size(); ++i) {
                    if (i) out += ' ';
                    out += n.targets[i];
                }
                out += ") ";
                sexpr(n.value, out);
                out += ")";
            } else if constexpr (std::is_same_v<T, CallStmt>) {
                out += "(do ";
                sexpr(n.call, out);
                out += ")";
            } else if constexpr (std::is_same_v<T, Foreach>) {
                out += "(foreach " + n.index + " " + std::to_string(n.first) + " " +
                       std::to_string(n.last) + " ";
                sexpr(n.body, out);
                out += ")";
            } else if constexpr (std::is_same_v<T, LeafDecl>) {
                const auto& b = n.binding;
                out += "(leaf " + params_str(b.outputs) + " " + b.name + " " + params_str(b.inputs);
                if (b.package) out += " (package " + script_quote(*b.package) + " " + script_quote(*b.version) + ")";
                out += " " + std::string(exec_kind_name(b.kind));
                if (b.code) out += " " + script_quote(*b.code);
                out += ")";
            } else {
                out += "(func " + params_str(n.outputs) + " " + n.name + " " + params_str(n.inputs) + " ";
                sexpr(n.body, out);
                out += ")";
            }
        },
        s.node);
}

void sexpr(const std::vector<Stmt>& body, std::string& out) {
    out += "(";
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i) out += ' ';
        sexpr(body[i], out);
    }
    out += ")";
}

int precedence(const Expr& e) {
    if (const auto* b = std::get_if<Binary>(&e.node)) return (b->op == '+' || b->op == '-') ? 1 : 2;
    return 3;
}

void print(const Expr& e, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, IntLit>) {
                out += std::to_string(n.value);
            } else if constexpr (std::is_same_v<T, FloatLit>) {
                out += format_float(n.value);
            } else if constexpr (std::is_same_v<T, StringLit>) {
                out += script_quote(n.value);
            } else if constexpr (std::is_same_v<T, VarRef>) {
                out += n.name;
            } else if constexpr (std::is_same_v<T, Call>) {
                out += n.callee + "(";
                for (std::size_t i = 0; i < n.args.size(); ++i) {
                    if (i) out += ", ";
                    print(n.args[i], out);
                }
                out += ")";
            } else if constexpr (std::is_same_v<T, Binary>) {
                // Left-associative: parenthesize a right operand of equal precedence.
                const int p = precedence(e);
                const bool lp = precedence(n.operands[0]) < p;
                const bool rp = precedence(n.operands[1]) <= p;
                if (lp) out += "(";
                print(n.operands[0], out);
                if (lp) out += ")";
                out += std::string(" ") + n.op + " ";
                if (rp) out += "(";
                print(n.operands[1], out);
                if (rp) out += ")";
            } else {
                out += "-";
                const bool paren = precedence(n.operand[0]) < 3 ||
                                   std::holds_alternative<Negate>(n.operand[0].node);
                if (paren) out += "(";
                print(n.operand[0], out);
                if (paren) out += ")";
            }
        },
        e.node);
}

void print(const std::vector<Stmt>& body, int depth, std::string& out);

void print(const Stmt& s, int depth, std::string& out) {
    const std::string indent(static_cast<std::size_t>(depth) * 4, ' ');
    out += indent;
    if (s.annotations.priority) out += "@priority(" + std::to_string(*s.annotations.priority) + ") ";
    if (s.annotations.target) out += "@target(" + std::to_string(*s.annotations.target) + ") ";
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarDecl>) {
                out += std::string(type_name(n.type)) + " " + n.name;
                if (n.init) {
                    out += " = ";
                    print(*n.init, out);
                }
                out += ";\n";
            } else if constexpr (std::is_same_v<T, Assign>) {
                if (n.targets.size() == 1) {
                    out += n.targets[0];
                } else {
                    out += "(";
                    for (std::size_t i = 0; i < n.targets.size(); ++i) {
                        if (i) out += ", ";
                        out += n.targets[i];
                    }
                    out += ")";
                }
                out += " = ";
                print(n.value, out);
                out += ";\n";
            } else if constexpr (std::is_same_v<T, CallStmt>) {
                print(n.call, out);
                out += ";\n";
            } else if constexpr (std::is_same_v<T, Foreach>) {
                out += "foreach " + n.index + " in [" + std::to_string(n.first) + ":" +
                       std::to_string(n.last) + "] {\n";
                print(n.body, depth + 1, out);
                out += indent + "}\n";
            } else if constexpr (std::is_same_v<T, LeafDecl>) {
                const auto& b = n.binding;
                out += "leaf " + params_str(b.outputs) + " " + b.name + " " + params_str(b.inputs);
                if (b.package) out += " package " + script_quote(*b.package) + " " + script_quote(*b.version);
                out += " " + std::string(exec_kind_name(b.kind));
                if (b.code) out += " " + script_quote(*b.code);
                out += ";\n";
            } else {
                out += "func " + params_str(n.outputs) + " " + n.name + " " + params_str(n.inputs) + " {\n";
                print(n.body, depth + 1, out);
                out += indent + "}\n";
            }
        },
        s.node);
}

void print(const std::vector<Stmt>& body, int depth, std::string& out) {
    for (const auto& s : body) print(s, depth, out);
}

}  // namespace

std::string to_sexpr(const Program& p) {
    std::string out;
    sexpr(p.statements, out);
    return out;
}

std::string to_sexpr(const Expr& e) {
    std::string out;
    sexpr(e, out);
    return out;
}

std::string pretty_print(const Program& p) {
    std::string out;
    print(p.statements, 0, out);
    return out;
}

std::string pretty_print(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

}  // namespace miniflow::ast
