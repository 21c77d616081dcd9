#ifndef TREECROWD_ERROR_HPP
#define TREECROWD_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace treecrowd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// A terrain query fell outside the raster's node hull.
class OutOfCoverage : public Error {
public:
  explicit OutOfCoverage(const std::string& what,
                         std::vector<std::size_t> indices = {})
      : Error(what), indices_(std::move(indices)) {}

  /// Offending point indices, when the query came from a whole cloud.
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

private:
  std::vector<std::size_t> indices_;
};

/// A metric whose denominator is zero.
class UndefinedMetric : public Error {
public:
  using Error::Error;
};

} // namespace treecrowd

#endif // TREECROWD_ERROR_HPP
