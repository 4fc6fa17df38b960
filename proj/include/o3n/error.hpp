#pragma once

#include <stdexcept>
#include <string>

namespace o3n {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, unsupported version or truncated payload in a binary container.
class MalformedContainer : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The video has fewer frames than the sampling strategy needs.
class VideoTooShort : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LabelOutOfRange : public Error {
 public:
  using Error::Error;
};

/// A checkpoint does not provide the tensors a model expects.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace o3n
