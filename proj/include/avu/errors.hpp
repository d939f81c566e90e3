#pragma once

#include <stdexcept>
#include <string>

namespace avu {

// Base of every error the library throws. `kind()` is the short machine tag
// used by the CLI error prefix ("avu-error: <kind>: <message>").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define AVU_DEFINE_ERROR(Name, Tag)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(Tag, message) {}   \
  };

AVU_DEFINE_ERROR(ShapeError, "ShapeError")
AVU_DEFINE_ERROR(ContractError, "ContractError")
AVU_DEFINE_ERROR(NumericsError, "NumericsError")
AVU_DEFINE_ERROR(FormatError, "FormatError")
AVU_DEFINE_ERROR(ValidationError, "ValidationError")
AVU_DEFINE_ERROR(ParseError, "ParseError")
AVU_DEFINE_ERROR(ConfigError, "ConfigError")

#undef AVU_DEFINE_ERROR

}  // namespace avu
