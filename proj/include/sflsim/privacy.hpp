#pragma once

#include <cstddef>

namespace sflsim {

/// Thread-local marker for code executing on behalf of the edge server.
/// Body-segment compute and codec decoding run inside one of these.
class ServerScope {
 public:
  ServerScope();
  ~ServerScope();
  ServerScope(const ServerScope&) = delete;
  ServerScope& operator=(const ServerScope&) = delete;

  static bool active();
};

/// A class label that refuses to be read in server scope. Acts as the
/// tainted-label double: any routing bug that carries a label into server
/// code trips the guard the moment the value is used.
class Label {
 public:
  Label() = default;
  explicit Label(size_t cls) : cls_(cls) {}

  /// Client-side read; throws std::logic_error if called in server scope.
  size_t value() const;

  /// Explicit disclosure for regimes that upload labels by design (plain SFL).
  /// Increments the global disclosure counter used by the byte accounting tests.
  size_t disclose() const;

  static size_t disclosure_count();
  static void reset_disclosure_count();

 private:
  size_t cls_ = 0;
};

}  // namespace sflsim
