#pragma once

#include <stdexcept>
#include <string>

namespace clickchoice {

// Bad input files, malformed records, flag values, dimension mismatches.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solver divergence, all EM chains degenerate, non-finite weights.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace clickchoice
