#include "sflsim/privacy.hpp"

#include <atomic>
#include <stdexcept>

namespace sflsim {

namespace {
thread_local int server_depth = 0;
std::atomic<size_t> disclosures{0};
}  // namespace

ServerScope::ServerScope() { ++server_depth; }
ServerScope::~ServerScope() { --server_depth; }
bool ServerScope::active() { return server_depth > 0; }

size_t Label::value() const {
  if (ServerScope::active()) {
    throw std::logic_error("label observed in server scope");
  }
  return cls_;
}

size_t Label::disclose() const {
  disclosures.fetch_add(1, std::memory_order_relaxed);
  return cls_;
}

size_t Label::disclosure_count() { return disclosures.load(std::memory_order_relaxed); }
void Label::reset_disclosure_count() { disclosures.store(0, std::memory_order_relaxed); }

}  // namespace sflsim
