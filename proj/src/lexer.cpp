#include "lexer.hpp"

#include <cstdio>

namespace flowforge::detail
{

namespace
{

bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
bool digit(char c) { return c >= '0' && c <= '9'; }

void append_utf8(std::string & out, unsigned cp)
{
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Lexer
{
public:
  Lexer(std::string_view text, const std::string & file) : text_(text), file_(file) {}

  std::vector<Token> run()
  {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token tok;
      tok.line = line_;
      tok.column = col_;
      if (pos_ >= text_.size()) {
        tok.kind = TokenKind::End;
        out.push_back(tok);
        return out;
      }
      const std::size_t start = pos_;
      const char c = text_[pos_];
      if (ident_start(c)) {
        while (pos_ < text_.size() && ident_char(text_[pos_])) advance();
        tok.kind = TokenKind::Ident;
        tok.text = std::string(text_.substr(start, pos_ - start));
      } else if (digit(c)) {
        lex_number(tok);
      } else if (c == '"') {
        lex_string(tok);
      } else {
        lex_punct(tok);
      }
      tok.length = static_cast<int>(pos_ - start);
      out.push_back(std::move(tok));
    }
  }

private:
  [[noreturn]] void fail(const std::string & msg)
  {
    throw SyntaxError{make_error("E_SYNTAX", msg, SourceSpan{file_, line_, col_, 1})};
  }

  void advance()
  {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space()
  {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else {
        return;
      }
    }
  }

  void lex_number(Token & tok)
  {
    const std::size_t start = pos_;
    bool is_float = false;
    while (pos_ < text_.size() && digit(text_[pos_])) advance();
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' && digit(text_[pos_ + 1])) {
      is_float = true;
      advance();
      while (pos_ < text_.size() && digit(text_[pos_])) advance();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && digit(text_[look])) {
        is_float = true;
        while (pos_ < look) advance();
        while (pos_ < text_.size() && digit(text_[pos_])) advance();
      }
    }
    if (pos_ < text_.size() && ident_char(text_[pos_])) fail("malformed number");
    tok.kind = is_float ? TokenKind::Float : TokenKind::Int;
    tok.text = std::string(text_.substr(start, pos_ - start));
  }

  void lex_string(Token & tok)
  {
    advance();
    std::string out;
    for (;;) {
      if (pos_ >= text_.size()) fail("unterminated string literal");
      const char c = text_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\n') fail("newline in string literal");
      if (c == '\\') {
        advance();
        if (pos_ >= text_.size()) fail("unterminated escape");
        const char e = text_[pos_];
        advance();
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case 'u': {
            unsigned cp = 0;
            for (int i = 0; i < 4; ++i) {
              if (pos_ >= text_.size()) fail("truncated \\u escape");
              const char h = text_[pos_];
              unsigned v = 0;
              if (h >= '0' && h <= '9') v = static_cast<unsigned>(h - '0');
              else if (h >= 'a' && h <= 'f') v = static_cast<unsigned>(h - 'a' + 10);
              else if (h >= 'A' && h <= 'F') v = static_cast<unsigned>(h - 'A' + 10);
              else fail("bad hex digit in \\u escape");
              cp = cp * 16 + v;
              advance();
            }
            append_utf8(out, cp);
            break;
          }
          default: fail(std::string("unknown escape '\\") + e + "'");
        }
        continue;
      }
      out += c;
      advance();
    }
    tok.kind = TokenKind::String;
    tok.text = std::move(out);
  }

  void lex_punct(Token & tok)
  {
    static constexpr std::string_view kTwo[] = {"==", "!=", "<=", ">=", "->", "<-"};
    const auto rest = text_.substr(pos_);
    for (auto p : kTwo) {
      if (rest.substr(0, 2) == p) {
        advance();
        advance();
        tok.kind = TokenKind::Punct;
        tok.text = std::string(p);
        return;
      }
    }
    static constexpr std::string_view kOne = "{}()[],.:;=<>+-*/";
    if (kOne.find(text_[pos_]) != std::string_view::npos) {
      tok.kind = TokenKind::Punct;
      tok.text = std::string(1, text_[pos_]);
      advance();
      return;
    }
    const unsigned char u = static_cast<unsigned char>(text_[pos_]);
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02X", u);
    fail(std::string("unexpected character ") + buf);
  }

  std::string_view text_;
  const std::string & file_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view text, const std::string & file)
{
  return Lexer(text, file).run();
}

bool is_identifier(std::string_view s)
{
  if (s.empty() || !ident_start(s.front())) return false;
  for (char c : s) {
    if (!ident_char(c)) return false;
  }
  return true;
}

}  // namespace flowforge::detail
