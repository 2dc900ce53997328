#pragma once

#include <stdexcept>
#include <string>

namespace fairaudit {

// Bad user input: malformed files, contradictory flags, infeasible requests.
// CLI maps this to exit code 2.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// A library invariant failed to hold. CLI maps this to exit code 3.
class invariant_error : public std::logic_error {
public:
    explicit invariant_error(const std::string& what) : std::logic_error(what) {}
};

inline void require_input(bool ok, const std::string& message) {
    if (!ok) throw input_error(message);
}

inline void require_invariant(bool ok, const std::string& message) {
    if (!ok) throw invariant_error(message);
}

} // namespace fairaudit
