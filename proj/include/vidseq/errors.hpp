#pragma once

#include <stdexcept>
#include <string>

namespace vidseq {

// Every library failure carries a short machine-readable kind tag
// ("dimension", "config", ...) so the CLI can print `error: <kind>: <msg>`.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define VIDSEQ_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(tag, message) {}   \
  };

VIDSEQ_DEFINE_ERROR(DimensionError, "dimension")
VIDSEQ_DEFINE_ERROR(ConfigError, "config")
VIDSEQ_DEFINE_ERROR(PreconditionError, "precondition")
VIDSEQ_DEFINE_ERROR(StateError, "state")
VIDSEQ_DEFINE_ERROR(ContractError, "contract")
VIDSEQ_DEFINE_ERROR(NumericError, "numeric")
VIDSEQ_DEFINE_ERROR(FormatError, "format")
VIDSEQ_DEFINE_ERROR(CorruptionError, "corruption")
VIDSEQ_DEFINE_ERROR(ValidationError, "validation")
VIDSEQ_DEFINE_ERROR(InputError, "input")
VIDSEQ_DEFINE_ERROR(TrainingError, "training")
VIDSEQ_DEFINE_ERROR(IoError, "io")

#undef VIDSEQ_DEFINE_ERROR

}  // namespace vidseq
