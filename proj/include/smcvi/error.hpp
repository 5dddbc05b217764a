#pragma once

#include <stdexcept>
#include <string>

namespace smcvi {

/// Raised when a caller breaks an operation's preconditions (shapes, ranges).
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Every particle weight at some step vanished.
class DegeneracyError : public std::runtime_error {
  public:
    DegeneracyError(const std::string& what, std::size_t step)
        : std::runtime_error(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t step_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

}  // namespace smcvi
