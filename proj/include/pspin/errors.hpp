#pragma once

#include <stdexcept>
#include <string>

namespace pspin {

// Invalid user input: bad config keys, malformed flags, inconsistent model.
// The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine failed to converge or left its domain of validity
// (root bracketing failure, invalid order parameter, ...).
// The CLI maps this to exit code 3.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pspin
