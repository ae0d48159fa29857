#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hmme {

/// Caller supplied something the operation cannot accept (bad kind, bad range, empty input).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training data too small to fit the requested model.
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

/// A serialized payload is malformed or violates a model invariant.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base learner `index` of class `class_tag` could not be trained.
class EnsembleMemberError : public DegenerateInputError {
 public:
  EnsembleMemberError(std::string class_tag, std::size_t index, const std::string& what)
      : DegenerateInputError(class_tag + " model " + std::to_string(index) + ": " + what),
        class_tag_(std::move(class_tag)),
        index_(index) {}

  const std::string& class_tag() const noexcept { return class_tag_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string class_tag_;
  std::size_t index_;
};

}  // namespace hmme
