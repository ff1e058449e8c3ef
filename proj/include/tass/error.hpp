#ifndef TASS_ERROR_HPP
#define TASS_ERROR_HPP

#include <sstream>
#include <stdexcept>
#include <string>

namespace tass {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define TASS_ERROR_TYPE(Name)                                        \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& m) : Error(#Name, m) {}         \
  }

TASS_ERROR_TYPE(DimensionError);   // operand shapes incompatible
TASS_ERROR_TYPE(DomainError);      // value outside the mathematical domain
TASS_ERROR_TYPE(IndexError);       // index out of range
TASS_ERROR_TYPE(ContractError);    // API precondition violated
TASS_ERROR_TYPE(StaleTapeError);   // backward on a consumed or foreign tape
TASS_ERROR_TYPE(FormatError);      // malformed tensor file or manifest
TASS_ERROR_TYPE(ValidationError);  // manifest/dataset content invalid
TASS_ERROR_TYPE(ConfigError);      // bad configuration value or combination
TASS_ERROR_TYPE(CheckpointError);  // checkpoint incompatible or unreadable
TASS_ERROR_TYPE(SeedError);        // rejection sampling exhausted for a seed
TASS_ERROR_TYPE(NumericError);     // non-finite value where finite required

#undef TASS_ERROR_TYPE

namespace detail {

template <class... Args>
std::string msg(Args&&... args) {
  std::ostringstream out;
  (out << ... << args);
  return out.str();
}

}  // namespace detail
}  // namespace tass

#endif  // TASS_ERROR_HPP
