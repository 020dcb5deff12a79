#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miniflow/ast.hpp"

namespace miniflow {

enum class TokenKind : std::uint8_t {
    Keyword,
    Identifier,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    Punctuation,
};

std::string_view token_kind_name(TokenKind k) noexcept;

struct Token {
    TokenKind kind = TokenKind::Punctuation;
    /// Raw lexeme as written, including quotes for string literals.
    std::string text;
    SourceLoc loc;

    bool operator==(const Token&) const = default;
};

/// Throws LexError on unterminated strings, bad escapes, stray characters and
/// out-of-range integer literals.
std::vector<Token> tokenize(std::string_view source);

/// Decoded contents of a string-literal token.
std::string string_literal_value(const Token& t);

/// Throws SyntaxError naming the offending token, or DeclError for malformed
/// leaf declarations.
ast::Program parse(std::span<const Token> tokens);

/// Parses exactly one `leaf ...;` declaration.
ast::LeafDecl parse_leaf_decl(std::span<const Token> tokens);

/// One slot per `<<name>>`, in textual order. Throws TemplateError on an
/// unterminated or empty slot.
std::vector<ast::TemplateSlot> extract_template_slots(std::string_view tmpl);

/// Builtin inline functions callable from scripts.
struct BuiltinSig {
    std::string_view name;
    std::vector<ScalarType> params;  // fixed parameters
    bool variadic = false;           // extra arguments of any type
    std::optional<ScalarType> result;
};
const BuiltinSig* find_builtin(std::string_view name) noexcept;

/// Type-annotated program. Implicit declarations (`t = f(i);` with no prior
/// `int t;`) are rewritten into explicit VarDecls.
struct CheckedProgram {
    ast::Program program;
};

/// Name binding, arity/type checks, write-once and dependency-cycle checks.
/// Throws ResolveError.
CheckedProgram resolve(ast::Program program);

/// tokenize + parse + resolve.
CheckedProgram compile_source(std::string_view source);

}  // namespace miniflow
