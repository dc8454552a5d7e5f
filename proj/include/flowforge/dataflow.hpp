#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/expr.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

/// Declared type of a data-flow root variable. A record type with an empty
/// basic means "record of `record_type`".
struct DeclaredType
{
  std::optional<BasicType> basic;
  std::string record_type;
  bool is_set = false;

  bool operator==(const DeclaredType &) const = default;
};

using Frame = std::map<std::string, Value>;

/// Per-instance variable store. Frame 0 is the base frame; each active loop
/// pushes one frame. Reads resolve innermost-first, writes to an existing
/// root update its owning frame, new roots bind in the innermost frame.
class DataFlow : public ReadView
{
public:
  DataFlow();

  const Value & read(const Path & path) const override;
  const Value * try_read(const Path & path) const;
  bool contains(std::string_view root) const;

  /// Throws E_TYPE_MISMATCH when the write changes a root's kind or
  /// conflicts with a declaration, E_NOT_A_RECORD when descending into a
  /// non-record.
  void write(const Path & path, Value value);

  /// Removes a root from the frame that owns it. Returns false if absent.
  bool remove(std::string_view root);

  void push_frame(Frame bindings);
  /// Throws E_POP_BASE on the base frame.
  void pop_frame();
  /// Replaces the innermost (non-base) frame wholesale.
  void reset_frame(Frame bindings);
  std::size_t depth() const { return frames_.size(); }
  const std::vector<Frame> & frames() const { return frames_; }

  void declare(const std::string & root, DeclaredType type);
  const std::map<std::string, DeclaredType> & declarations() const { return declared_; }

  /// Visible bindings (innermost wins), sorted by name.
  Frame visible() const;

  /// Canonical JSON; each value carries a `$kind` discriminator.
  std::string snapshot() const;
  /// Throws E_CORRUPT_IMAGE on malformed input.
  static DataFlow restore(std::string_view image);

  friend bool operator==(const DataFlow & a, const DataFlow & b)
  {
    return a.frames_ == b.frames_ && a.declared_ == b.declared_;
  }

private:
  Frame * owning_frame(std::string_view root);
  const Frame * owning_frame(std::string_view root) const;
  [[noreturn]] void throw_type_clash(const std::string & root, const Value & existing, const Value & incoming) const;

  std::vector<Frame> frames_;
  std::map<std::string, DeclaredType> declared_;
};

/// Coerces `v` for storage under `existing`'s kind (INTEGER widens to FLOAT).
/// Returns false if the kinds are incompatible.
bool conform_kind(const Value & existing, Value & v);

}  // namespace flowforge
