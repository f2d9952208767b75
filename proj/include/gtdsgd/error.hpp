// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gtdsgd {

/// Base of every library error. Callers that only need a message catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or structural invariant on an input.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Configuration file is malformed; the message names the key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A LIBSVM line failed to parse. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Non-finite value produced during an update. Carries the iteration and agent.
class NumericalFault : public Error {
public:
    NumericalFault(std::size_t iteration, std::size_t agent, const std::string& what)
        : Error(what + " (iteration " + std::to_string(iteration) + ", agent " +
                std::to_string(agent) + ")"),
          iteration_(iteration),
          agent_(agent) {}
    std::size_t iteration() const noexcept { return iteration_; }
    std::size_t agent() const noexcept { return agent_; }

private:
    std::size_t iteration_;
    std::size_t agent_;
};

}  // namespace gtdsgd
