#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchflow {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class DegenerateSupport : public Error {
 public:
  using Error::Error;
};

class EmptyIndex : public Error {
 public:
  EmptyIndex() : Error("nearest-neighbor index built on an empty point set") {}
};

/// Malformed file content. `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), path_(path), line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

/// A record is missing a field or carries an out-of-range value.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : Error("field '" + field + "': " + what), field_(field) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ImportKeyMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyPatchFeature : public Error {
 public:
  using Error::Error;
};

class NoVisibleImage : public Error {
 public:
  using Error::Error;
};

class ImageTooSmall : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class NoEstimateNearObservation : public Error {
 public:
  using Error::Error;
};

class EmptyNeighborhood : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure inside a pipeline stage, tagged with the stage name and tile pair.
class StageError : public Error {
 public:
  StageError(const std::string& stage, int pair_id, const std::string& what)
      : Error("[" + stage + (pair_id >= 0 ? " tile " + std::to_string(pair_id) : std::string()) +
              "] " + what),
        stage_(stage),
        pair_id_(pair_id) {}

  const std::string& stage() const { return stage_; }
  int pair_id() const { return pair_id_; }

 private:
  std::string stage_;
  int pair_id_;
};

}  // namespace patchflow
