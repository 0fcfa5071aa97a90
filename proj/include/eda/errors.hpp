// eda/errors.hpp
//
// Exception hierarchy shared by every module. Each failure class named in the
// module contracts has its own type so callers (and the CLI) can dispatch on it.

#ifndef EDA_ERRORS_HPP_
#define EDA_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace eda {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EDA_DEFINE_ERROR(Name)              \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

EDA_DEFINE_ERROR(InputEmpty);
EDA_DEFINE_ERROR(ConfigInvalid);
EDA_DEFINE_ERROR(SpecInfeasible);
EDA_DEFINE_ERROR(IoError);
EDA_DEFINE_ERROR(ShapeError);
EDA_DEFINE_ERROR(TooManySpeakers);
EDA_DEFINE_ERROR(DivergenceError);
EDA_DEFINE_ERROR(CheckpointIncompatible);
EDA_DEFINE_ERROR(EmptyDiarization);
EDA_DEFINE_ERROR(UndefinedDER);

#undef EDA_DEFINE_ERROR

// Malformed RTTM (or config) input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string &what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace eda

#endif  // EDA_ERRORS_HPP_
