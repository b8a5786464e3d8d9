#pragma once

#include <stdexcept>
#include <string>

namespace amrt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A named channel was requested but the field does not carry it.
class ChannelError : public Error {
 public:
  explicit ChannelError(const std::string& channel)
      : Error("missing channel '" + channel + "'"), channel_(channel) {}
  const std::string& channel() const noexcept { return channel_; }

 private:
  std::string channel_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Density or pressure dropped to a non-positive value.
class PositivityError : public Error {
 public:
  PositivityError(const std::string& what, std::size_t row, std::size_t col)
      : Error(what + " at cell (" + std::to_string(row) + ", " +
              std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class FormatError : public Error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace amrt
