#pragma once

#include <stdexcept>
#include <string>

namespace defence {

// Precondition violations throw std::invalid_argument. The types below carry
// the categories the command-line front end maps onto exit codes.

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Divergence, non-convergence or a non-finite iterate.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace defence
