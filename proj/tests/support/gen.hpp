#pragma once

// Random model generators for property tests. Names always end in a digit,
// so they never collide with a keyword or a basic type name.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "flowforge/abr.hpp"
#include "flowforge/domain.hpp"
#include "flowforge/expr.hpp"
#include "flowforge/flow.hpp"

namespace ffgen
{

using Rng = std::mt19937_64;

class Gen
{
public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  Rng & rng() { return rng_; }

  std::int64_t range(std::int64_t lo, std::int64_t hi);
  bool chance(double p);
  template <class T>
  const T & pick(const std::vector<T> & xs)
  {
    return xs[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(xs.size()) - 1))];
  }

  std::string name();
  std::string text();
  flowforge::Path path(int max_len = 3);
  flowforge::BasicType basic_type(bool with_image = true);
  flowforge::TypeRef type_ref(const std::vector<std::string> & type_names);

  /// A literal-expressible value of the given kind (never IMAGE).
  flowforge::Value value(flowforge::BasicType t);
  /// Scalar or list literal.
  flowforge::Value literal(int depth = 0);

  flowforge::ExprPtr expr(int depth);
  flowforge::Script script(int max_len);

  flowforge::DomainModel domain();
  flowforge::AbrModel abr();
  flowforge::FlowModel flow();

private:
  Rng rng_;
  int counter_ = 0;
};

}  // namespace ffgen
