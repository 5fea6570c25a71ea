#pragma once

#include <stdexcept>
#include <string>

namespace tiledefect {

// Bad input: missing files, schema violations, out-of-range parameters.
// The CLI maps this to exit code 1; every other exception maps to 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tiledefect
