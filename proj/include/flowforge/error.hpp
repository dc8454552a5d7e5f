#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowforge
{

/// Runtime failure carrying a stable error code such as "E_NULL_READ".
class Error : public std::runtime_error
{
public:
  Error(std::string code, const std::string & message)
  : std::runtime_error(message), code_(std::move(code))
  {
  }

  const std::string & code() const noexcept { return code_; }

private:
  std::string code_;
};

struct SourceSpan
{
  std::string file;
  int line = 1;
  int column = 1;
  int length = 0;

  // Spans never take part in model equality.
  friend bool operator==(const SourceSpan &, const SourceSpan &) { return true; }
};

enum class Severity { Error, Warning };

struct Diagnostic
{
  Severity severity = Severity::Error;
  SourceSpan span;
  std::string code;
  std::string message;
};

/// `file:line:col: severity[CODE] message`
std::string format_diagnostic(const Diagnostic & d);

bool has_errors(const std::vector<Diagnostic> & diags);

inline Diagnostic make_error(std::string code, std::string message, SourceSpan span = {})
{
  return Diagnostic{Severity::Error, std::move(span), std::move(code), std::move(message)};
}

inline Diagnostic make_warning(std::string code, std::string message, SourceSpan span = {})
{
  return Diagnostic{Severity::Warning, std::move(span), std::move(code), std::move(message)};
}

}  // namespace flowforge
