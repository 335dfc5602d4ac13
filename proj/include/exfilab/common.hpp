#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace exfilab {

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError/ArgumentError/ShapeError -> 2, IoError/ParseError -> 3,
//   NumericError/UndefinedAucError -> 4, CapacityError/PayloadError -> 5.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct CapacityError : Error {
    using Error::Error;
};
struct PayloadError : Error {
    using Error::Error;
};
struct UndefinedAucError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace exfilab
