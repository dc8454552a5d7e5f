#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "flowforge/error.hpp"

namespace flowforge::detail
{

enum class TokenKind { Ident, Int, Float, String, Punct, End };

struct Token
{
  TokenKind kind = TokenKind::End;
  std::string text;  // decoded text for strings, raw text otherwise
  int line = 1;
  int column = 1;
  int length = 0;
};

/// Thrown inside the front-end; converted to a diagnostic at the API edge.
struct SyntaxError
{
  Diagnostic diagnostic;
};

/// Splits `text` into tokens. Punctuation: { } ( ) [ ] , . : ; = == != < <=
/// > >= + - * / -> <-. Comments run from `//` to end of line.
std::vector<Token> tokenize(std::string_view text, const std::string & file);

bool is_identifier(std::string_view s);

}  // namespace flowforge::detail
