#pragma once

#include <stdexcept>
#include <string>

namespace tsa {

// Base of every error raised by the library. Callers that only need a
// diagnostic catch this; tests match the concrete subclasses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TSA_DEFINE_ERROR(Name)                  \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

TSA_DEFINE_ERROR(EmptyClass);
TSA_DEFINE_ERROR(SingularCovariance);
TSA_DEFINE_ERROR(DimensionError);
TSA_DEFINE_ERROR(EmptyDataset);
TSA_DEFINE_ERROR(IndexError);
TSA_DEFINE_ERROR(UndefinedBias);
TSA_DEFINE_ERROR(ConfigError);
TSA_DEFINE_ERROR(EvalError);
TSA_DEFINE_ERROR(IoError);

#undef TSA_DEFINE_ERROR

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace tsa
