#include "flowforge/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "flowforge/error.hpp"

namespace flowforge
{

namespace
{

constexpr std::string_view kBasicNames[] = {"STRING", "INTEGER",  "FLOAT", "BOOLEAN",
                                            "DATE",   "LOCATION", "IMAGE"};

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d)
{
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t & y, unsigned & m, unsigned & d)
{
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool read_digits(std::string_view text, std::size_t pos, std::size_t n, int & out)
{
  if (pos + n > text.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
    v = v * 10 + (text[i] - '0');
  }
  out = v;
  return true;
}

unsigned days_in_month(std::int64_t y, unsigned m)
{
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29 : kDays[m - 1];
}

}  // namespace

std::string_view basic_type_name(BasicType t) { return kBasicNames[static_cast<int>(t)]; }

std::optional<BasicType> basic_type_from_name(std::string_view name)
{
  for (int i = 0; i < 7; ++i) {
    if (kBasicNames[i] == name) return static_cast<BasicType>(i);
  }
  return std::nullopt;
}

std::string_view value_kind_name(ValueKind k)
{
  static constexpr std::string_view kNames[] = {"STRING", "INTEGER",  "FLOAT",
                                                "BOOLEAN", "DATE",    "LOCATION",
                                                "IMAGE",   "RECORD",  "SET"};
  return kNames[static_cast<int>(k)];
}

std::optional<Date> parse_iso_date(std::string_view text)
{
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0, millis = 0;
  if (text.size() < 20) return std::nullopt;
  if (!read_digits(text, 0, 4, year) || text[4] != '-' || !read_digits(text, 5, 2, month) ||
      text[7] != '-' || !read_digits(text, 8, 2, day) || text[10] != 'T' ||
      !read_digits(text, 11, 2, hour) || text[13] != ':' || !read_digits(text, 14, 2, minute) ||
      text[16] != ':' || !read_digits(text, 17, 2, second)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (text[pos] == '.') {
    if (!read_digits(text, pos + 1, 3, millis)) return std::nullopt;
    pos += 4;
  }
  if (pos + 1 != text.size() || text[pos] != 'Z') return std::nullopt;
  if (month < 1 || month > 12 || day < 1 ||
      static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month)) ||
      hour > 23 || minute > 59 || second > 59) {
    return std::nullopt;
  }
  const std::int64_t days =
    days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  return Date{((days * 24 + hour) * 60 + minute) * 60000LL + second * 1000LL + millis};
}

std::string format_iso_date(Date d)
{
  std::int64_t ms = d.epoch_ms;
  std::int64_t days = ms >= 0 ? ms / 86400000 : -((-ms + 86399999) / 86400000);
  std::int64_t rem = ms - days * 86400000;
  std::int64_t y = 0;
  unsigned m = 0, day = 0;
  civil_from_days(days, y, m, day);
  char buf[64];
  std::snprintf(
    buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", static_cast<long long>(y), m,
    day, static_cast<long long>(rem / 3600000), static_cast<long long>(rem / 60000 % 60),
    static_cast<long long>(rem / 1000 % 60), static_cast<long long>(rem % 1000));
  return buf;
}

std::optional<BasicType> Value::basic() const
{
  switch (kind()) {
    case ValueKind::String: return BasicType::String;
    case ValueKind::Integer: return BasicType::Integer;
    case ValueKind::Float: return BasicType::Float;
    case ValueKind::Boolean: return BasicType::Boolean;
    case ValueKind::Date: return BasicType::Date;
    case ValueKind::Location: return BasicType::Location;
    case ValueKind::Image: return BasicType::Image;
    default: return std::nullopt;
  }
}

bool operator==(const Record & a, const Record & b)
{
  return a.type_name == b.type_name && a.fields == b.fields;
}

bool operator==(const Value & a, const Value & b) { return a.data == b.data; }

std::string to_display_string(const Value & v)
{
  switch (v.kind()) {
    case ValueKind::String: return v.as<std::string>();
    case ValueKind::Integer: return std::to_string(v.as<std::int64_t>());
    case ValueKind::Float: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, v.as<double>());
      return std::string(buf, res.ptr);
    }
    case ValueKind::Boolean: return v.as<bool>() ? "true" : "false";
    case ValueKind::Date: return format_iso_date(v.as<Date>());
    case ValueKind::Location: {
      const auto & l = v.as<Location>();
      return "(" + to_display_string(Value(l.latitude)) + ", " +
             to_display_string(Value(l.longitude)) + ")";
    }
    case ValueKind::Image: return v.as<Image>().media_type + ":" + v.as<Image>().ref;
    case ValueKind::Record: {
      std::string out = v.as<Record>().type_name + "{";
      bool first = true;
      for (const auto & [k, fv] : v.as<Record>().fields) {
        if (!first) out += ", ";
        first = false;
        out += k + ": " + to_display_string(fv);
      }
      return out + "}";
    }
    case ValueKind::List: {
      std::string out = "[";
      bool first = true;
      for (const auto & item : v.as<List>()) {
        if (!first) out += ", ";
        first = false;
        out += to_display_string(item);
      }
      return out + "]";
    }
  }
  return {};
}

bool is_homogeneous(const List & items)
{
  if (items.empty()) return true;
  const auto k = items.front().kind();
  for (const auto & item : items) {
    if (item.kind() != k) return false;
    if (k == ValueKind::Record && item.as<Record>().type_name != items.front().as<Record>().type_name)
      return false;
  }
  return true;
}

Path Path::parse(std::string_view dotted)
{
  Path p;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    auto dot = dotted.find('.', start);
    if (dot == std::string_view::npos) dot = dotted.size();
    p.segments.emplace_back(dotted.substr(start, dot - start));
    start = dot + 1;
  }
  return p;
}

std::string Path::str() const
{
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += '.';
    out += segments[i];
  }
  return out;
}

std::string format_diagnostic(const Diagnostic & d)
{
  std::string out = d.span.file.empty() ? std::string("<input>") : d.span.file;
  out += ":" + std::to_string(d.span.line) + ":" + std::to_string(d.span.column) + ": ";
  out += d.severity == Severity::Error ? "error" : "warning";
  out += "[" + d.code + "] " + d.message;
  return out;
}

bool has_errors(const std::vector<Diagnostic> & diags)
{
  for (const auto & d : diags) {
    if (d.severity == Severity::Error) return true;
  }
  return false;
}

}  // namespace flowforge
