#pragma once

#include <stdexcept>
#include <string>

namespace protmd {

// Broad failure class, used to pick a process exit code at the CLI boundary.
enum class ErrorKind {
  kInvalidInput,  // bad geometry, config, shapes, datasets -> exit 2
  kNumerical,     // non-finite values where finite ones are required -> exit 3
  kIo,            // file format / filesystem problems -> exit 2
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define PROTMD_DEFINE_ERROR(NAME, KIND)                                 \
  class NAME : public Error {                                           \
   public:                                                              \
    explicit NAME(const std::string& what) : Error(ErrorKind::KIND, #NAME ": " + what) {} \
  }

PROTMD_DEFINE_ERROR(InvalidGeometry, kInvalidInput);
PROTMD_DEFINE_ERROR(EmptyPartition, kInvalidInput);
PROTMD_DEFINE_ERROR(NoPocket, kInvalidInput);
PROTMD_DEFINE_ERROR(InvalidParameter, kInvalidInput);
PROTMD_DEFINE_ERROR(ShapeError, kInvalidInput);
PROTMD_DEFINE_ERROR(NumericalError, kNumerical);
PROTMD_DEFINE_ERROR(UnknownInterval, kInvalidInput);
PROTMD_DEFINE_ERROR(FrameOutOfRange, kInvalidInput);
PROTMD_DEFINE_ERROR(InvalidSample, kInvalidInput);
PROTMD_DEFINE_ERROR(DegenerateInput, kInvalidInput);
PROTMD_DEFINE_ERROR(EmptyInput, kInvalidInput);
PROTMD_DEFINE_ERROR(InvalidDataset, kInvalidInput);
PROTMD_DEFINE_ERROR(IoError, kIo);

#undef PROTMD_DEFINE_ERROR

}  // namespace protmd
