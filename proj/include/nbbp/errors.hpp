#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nbbp {

// Each kind maps to a distinct process exit code in the command-line tool.
enum class ErrorKind : int {
  Domain = 10,
  IterationLimit = 11,
  DimensionMismatch = 12,
  NotPositiveDefinite = 13,
  NonConvergence = 14,
  DegenerateData = 15,
  InvalidData = 16,
  MissingColumn = 17,
  NonNumeric = 18,
  EmptyFile = 19,
  MismatchedData = 20,
  Unachievable = 21,
  EmptyGroup = 22,
  Io = 23,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string &what) : Error(ErrorKind::Domain, what) {}
};

class IterationLimitError : public Error {
 public:
  IterationLimitError(const std::string &what, double lo, double hi)
      : Error(ErrorKind::IterationLimit, what), lo_(lo), hi_(hi) {}

  // Best bracket known when the iteration budget ran out.
  double bracket_lo() const noexcept { return lo_; }
  double bracket_hi() const noexcept { return hi_; }

 private:
  double lo_;
  double hi_;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string &what)
      : Error(ErrorKind::DimensionMismatch, what) {}
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string &what, std::vector<double> eigenvalues)
      : Error(ErrorKind::NotPositiveDefinite, what), eigenvalues_(std::move(eigenvalues)) {}

  const std::vector<double> &eigenvalues() const noexcept { return eigenvalues_; }

 private:
  std::vector<double> eigenvalues_;
};

class NonConvergence : public Error {
 public:
  explicit NonConvergence(const std::string &what) : Error(ErrorKind::NonConvergence, what) {}
};

class DegenerateData : public Error {
 public:
  explicit DegenerateData(const std::string &what) : Error(ErrorKind::DegenerateData, what) {}
};

class InvalidData : public Error {
 public:
  explicit InvalidData(const std::string &what) : Error(ErrorKind::InvalidData, what) {}
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string &column)
      : Error(ErrorKind::MissingColumn, "missing required column '" + column + "'") {}
};

class NonNumeric : public Error {
 public:
  NonNumeric(std::size_t line, const std::string &what)
      : Error(ErrorKind::NonNumeric, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyFile : public Error {
 public:
  explicit EmptyFile(const std::string &path) : Error(ErrorKind::EmptyFile, "empty file: " + path) {}
};

class MismatchedData : public Error {
 public:
  explicit MismatchedData(const std::string &what) : Error(ErrorKind::MismatchedData, what) {}
};

class Unachievable : public Error {
 public:
  explicit Unachievable(const std::string &what) : Error(ErrorKind::Unachievable, what) {}
};

class EmptyGroup : public Error {
 public:
  explicit EmptyGroup(const std::string &what) : Error(ErrorKind::EmptyGroup, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string &what) : Error(ErrorKind::Io, what) {}
};

}  // namespace nbbp
