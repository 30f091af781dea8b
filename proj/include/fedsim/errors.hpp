#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

// Failure of an iterative numerical procedure: CG breakdown, divergence,
// an oracle that did not reach its tolerance within budget.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation not defined for the given loss kind or configuration.
struct UnsupportedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; line numbers are 1-based.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
  std::size_t line;
};

}  // namespace fedsim
