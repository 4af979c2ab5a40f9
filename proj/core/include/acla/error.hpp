#pragma once

#include <stdexcept>
#include <string>

namespace acla {

// Shape disagreement between operands (conv channel mismatch etc).
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside the mathematical domain of an operation (tau <= 0,
// non-finite sample position, empty softmax input, negative sigma).
struct DomainError : std::invalid_argument {
    explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

// API misuse: non-scalar loss passed to backward, K = 0, backward on a
// spent tape.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Invalid or inconsistent experiment configuration.  Carries the field
// name so the CLI can report it.
struct ConfigError : std::runtime_error {
    ConfigError(std::string field_name, const std::string& what)
        : std::runtime_error(what), field(std::move(field_name)) {}
    std::string field;
};

// File IO and persistence failures (bad magic, truncation, version skew).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace acla
