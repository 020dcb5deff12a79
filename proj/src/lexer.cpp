#include <array>
#include <charconv>
#include <cstdlib>

#include "miniflow/frontend.hpp"

namespace miniflow {

std::string SourceLoc::str() const {
    if (line == 0) return "<unknown>";
    return std::to_string(line) + ":" + std::to_string(column);
}

CompileError::CompileError(const std::string& what, SourceLoc loc)
    : Error(loc.line ? loc.str() + ": " + what : what), loc_(loc) {}

std::string_view token_kind_name(TokenKind k) noexcept {
    switch (k) {
        case TokenKind::Keyword: return "keyword";
        case TokenKind::Identifier: return "identifier";
        case TokenKind::IntLiteral: return "integer literal";
        case TokenKind::FloatLiteral: return "float literal";
        case TokenKind::StringLiteral: return "string literal";
        case TokenKind::Punctuation: return "punctuation";
    }
    return "?";
}

namespace {

constexpr std::array<std::string_view, 12> kKeywords = {
    "int", "float", "string", "blob", "leaf", "func",
    "package", "template", "native", "guest", "foreach", "in",
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space_and_comments();
            if (pos_ >= src_.size()) break;
            out.push_back(next());
        }
        return out;
    }

private:
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '/' && peek(1) == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    Token next() {
        const SourceLoc loc{line_, col_};
        const std::size_t start = pos_;
        const char c = src_[pos_];
        auto make = [&](TokenKind kind) {
            return Token{kind, std::string(src_.substr(start, pos_ - start)), loc};
        };

        if (is_ident_start(c)) {
            while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
            Token t = make(TokenKind::Identifier);
            for (auto kw : kKeywords) {
                if (t.text == kw) t.kind = TokenKind::Keyword;
            }
            return t;
        }
        if (is_digit(c)) return number(loc, start);
        if (c == '"') return string_literal(loc, start);

        static constexpr std::string_view kPunct = "(){}[];,=:+-*/@";
        if (kPunct.find(c) != std::string_view::npos) {
            advance();
            return make(TokenKind::Punctuation);
        }
        throw LexError(std::string("unexpected character '") + c + "'", loc);
    }

    Token number(SourceLoc loc, std::size_t start) {
        bool is_float = false;
        while (is_digit(peek())) advance();
        if (peek() == '.' && is_digit(peek(1))) {
            is_float = true;
            advance();
            while (is_digit(peek())) advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            std::size_t k = 1;
            if (peek(1) == '+' || peek(1) == '-') k = 2;
            if (is_digit(peek(k))) {
                is_float = true;
                for (std::size_t i = 0; i < k; ++i) advance();
                while (is_digit(peek())) advance();
            }
        }
        if (is_ident_start(peek())) {
            throw LexError("malformed number", loc);
        }
        std::string text(src_.substr(start, pos_ - start));
        if (!is_float) {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{}) {
                throw LexError("integer literal out of range: " + text, loc);
            }
        }
        return Token{is_float ? TokenKind::FloatLiteral : TokenKind::IntLiteral, std::move(text),
                     loc};
    }

    Token string_literal(SourceLoc loc, std::size_t start) {
        advance();  // opening quote
        while (true) {
            if (pos_ >= src_.size()) {
                throw LexError("unterminated string literal", loc);
            }
            char c = src_[pos_];
            if (c == '"') {
                advance();
                break;
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) throw LexError("unterminated string literal", loc);
                char e = src_[pos_];
                if (e != '"' && e != '\\' && e != 'n' && e != 't' && e != 'r') {
                    throw LexError(std::string("unknown escape '\\") + e + "'",
                                   SourceLoc{line_, col_ - 1});
                }
            }
            advance();
        }
        return Token{TokenKind::StringLiteral, std::string(src_.substr(start, pos_ - start)), loc};
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::uint32_t line_ = 1;
    std::uint32_t col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::string string_literal_value(const Token& t) {
    std::string out;
    std::string_view s = t.text;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (s[i] == '\\') {
            ++i;
            switch (s[i]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: out += s[i];
            }
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace miniflow
