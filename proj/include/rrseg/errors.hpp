#pragma once

#include <stdexcept>
#include <string>

namespace rrseg {

// Errors are split into two kinds so the CLI can map them to exit codes:
// validation errors (bad config, bad input files, shape mismatches) exit 2,
// runtime errors (divergence, I/O failures mid-run) exit 3.
enum class ErrorKind { Validation, Runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

#define RRSEG_DEFINE_ERROR(NAME, KIND)                                        \
    class NAME : public Error {                                              \
    public:                                                                  \
        explicit NAME(const std::string& what)                               \
            : Error(ErrorKind::KIND, std::string(#NAME ": ") + what) {}      \
    }

RRSEG_DEFINE_ERROR(ConfigError, Validation);
RRSEG_DEFINE_ERROR(ShapeError, Validation);
RRSEG_DEFINE_ERROR(EmptyTextError, Validation);
RRSEG_DEFINE_ERROR(DegenerateError, Validation);
RRSEG_DEFINE_ERROR(EmptySetError, Validation);
RRSEG_DEFINE_ERROR(MissingPredictionError, Validation);
RRSEG_DEFINE_ERROR(ManifestError, Validation);
RRSEG_DEFINE_ERROR(MissingFileError, Validation);
RRSEG_DEFINE_ERROR(SpecError, Validation);
RRSEG_DEFINE_ERROR(ImageFormatError, Validation);
RRSEG_DEFINE_ERROR(CheckpointShapeError, Validation);
RRSEG_DEFINE_ERROR(DivergenceError, Runtime);
RRSEG_DEFINE_ERROR(IoError, Runtime);

#undef RRSEG_DEFINE_ERROR

}  // namespace rrseg
