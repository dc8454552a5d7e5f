#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowforge
{

/// The seven basic kinds a domain attribute can have.
enum class BasicType { String, Integer, Float, Boolean, Date, Location, Image };

inline constexpr BasicType kAllBasicTypes[] = {
  BasicType::String, BasicType::Integer,  BasicType::Float, BasicType::Boolean,
  BasicType::Date,   BasicType::Location, BasicType::Image,
};

std::string_view basic_type_name(BasicType t);
std::optional<BasicType> basic_type_from_name(std::string_view name);

/// UTC instant with millisecond precision.
struct Date
{
  std::int64_t epoch_ms = 0;
  auto operator<=>(const Date &) const = default;
};

/// `YYYY-MM-DDTHH:MM:SS[.mmm]Z`
std::optional<Date> parse_iso_date(std::string_view text);
std::string format_iso_date(Date d);

struct Location
{
  double latitude = 0;
  double longitude = 0;
  bool operator==(const Location &) const = default;
};

/// Media type plus a content-addressed blob reference.
struct Image
{
  std::string media_type;
  std::string ref;
  bool operator==(const Image &) const = default;
};

struct Value;

struct Record
{
  std::string type_name;  // empty for records built from partial path writes
  std::map<std::string, Value> fields;
};

using List = std::vector<Value>;

enum class ValueKind { String, Integer, Float, Boolean, Date, Location, Image, Record, List };

std::string_view value_kind_name(ValueKind k);

struct Value
{
  using Storage =
    std::variant<std::string, std::int64_t, double, bool, Date, Location, Image, Record, List>;
  Storage data;

  Value() : data(std::string{}) {}
  Value(std::string s) : data(std::move(s)) {}
  Value(const char * s) : data(std::string(s)) {}
  Value(std::int64_t i) : data(i) {}
  Value(int i) : data(static_cast<std::int64_t>(i)) {}
  Value(double d) : data(d) {}
  Value(bool b) : data(b) {}
  Value(Date d) : data(d) {}
  Value(Location l) : data(l) {}
  Value(Image i) : data(std::move(i)) {}
  Value(Record r) : data(std::move(r)) {}
  Value(List l) : data(std::move(l)) {}

  ValueKind kind() const { return static_cast<ValueKind>(data.index()); }

  template <class T>
  bool is() const
  {
    return std::holds_alternative<T>(data);
  }
  template <class T>
  const T & as() const
  {
    return std::get<T>(data);
  }
  template <class T>
  T & as()
  {
    return std::get<T>(data);
  }

  /// Basic kind of a scalar value; nullopt for records and lists.
  std::optional<BasicType> basic() const;

  friend bool operator==(const Value & a, const Value & b);
};

bool operator==(const Record & a, const Record & b);

/// Human-readable rendering used in messages and the interactive driver.
std::string to_display_string(const Value & v);

/// A list is homogeneous when all elements share one kind (records also share a type name).
bool is_homogeneous(const List & items);

/// Dot-separated attribute chain rooted at a data-flow variable.
struct Path
{
  std::vector<std::string> segments;

  Path() = default;
  explicit Path(std::vector<std::string> segs) : segments(std::move(segs)) {}
  static Path parse(std::string_view dotted);

  const std::string & root() const { return segments.front(); }
  bool empty() const { return segments.empty(); }
  std::size_t size() const { return segments.size(); }
  std::string str() const;

  bool operator==(const Path &) const = default;
  auto operator<=>(const Path &) const = default;
};

}  // namespace flowforge
