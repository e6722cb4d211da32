#pragma once

#include <stdexcept>
#include <string>

namespace ctxdit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CTXDIT_DEFINE_ERROR(Name)        \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

CTXDIT_DEFINE_ERROR(ShapeError);
CTXDIT_DEFINE_ERROR(NumericError);
CTXDIT_DEFINE_ERROR(MaskError);
CTXDIT_DEFINE_ERROR(DeterminismError);
CTXDIT_DEFINE_ERROR(ConfigError);
CTXDIT_DEFINE_ERROR(RangeError);
CTXDIT_DEFINE_ERROR(VocabError);
CTXDIT_DEFINE_ERROR(FormatError);
CTXDIT_DEFINE_ERROR(GenError);
CTXDIT_DEFINE_ERROR(ExtractionError);

#undef CTXDIT_DEFINE_ERROR

}  // namespace ctxdit
