#ifndef DROPTUNE_ERRORS_HPP
#define DROPTUNE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace droptune {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix/vector dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (empty input, bad rate, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite gradient reached the optimizer.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t layer)
      : Error(what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

// Training cost became non-finite.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::size_t epoch)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

// Unparseable CSV cell. Row and column are 1-based (row 1 is the header).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what), row_(row), column_(column) {}
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

// Data violates a structural expectation (non-binary label, constant feature).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Filtering left nothing to work with.
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

// A class is missing from one side of a stratified split.
class StratificationError : public Error {
 public:
  using Error::Error;
};

// Ledger content is inconsistent. Line is 1-based, 0 when not line-specific.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::size_t line = 0)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A threshold selected no records.
class DegenerateSelectionError : public Error {
 public:
  using Error::Error;
};

// A surrogate could not be fitted (rank deficiency, single class, too few rows).
class FitError : public Error {
 public:
  using Error::Error;
};

// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace droptune

#endif  // DROPTUNE_ERRORS_HPP
