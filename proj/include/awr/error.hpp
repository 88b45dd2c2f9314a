#pragma once

#include <stdexcept>
#include <string>

namespace awr {

// Exit-code mapping used by the CLI: ConfigError/ShapeError/ParseError -> 2,
// DivergenceError -> 3, ContractError -> 4.

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class DivergenceError : public Error {
public:
  using Error::Error;
};

class ContractError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, long line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  long line() const noexcept { return line_; }

private:
  long line_;
};

}  // namespace awr
