#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace delayroll {

/// Precondition or shape violation on a public entry point.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// SVD failure, non-finite score or gradient.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A simulation, rollout or training run produced non-finite values.
class DivergedError : public NumericalError {
public:
    DivergedError(std::string stage, std::size_t step, const std::string& detail)
        : NumericalError(stage + " diverged at step " + std::to_string(step) +
                         (detail.empty() ? std::string{} : ": " + detail)),
          stage_(std::move(stage)),
          step_(step) {}

    const std::string& stage() const noexcept { return stage_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::string stage_;
    std::size_t step_;
};

/// Malformed input file. Carries the location that failed to parse.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
          file_(std::move(file)),
          line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

/// Experiment configuration failed validation; `field()` is a dotted path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace delayroll
