#pragma once

#include <stdexcept>
#include <string>

namespace tailor {

// Root of every domain error raised by the library. The CLI maps these to
// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define TAILOR_DEFINE_ERROR(Name, Code)                                        \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(Code, message) {}   \
    };

// garment-data
TAILOR_DEFINE_ERROR(MissingFile, "MISSING_FILE")
TAILOR_DEFINE_ERROR(LandmarkOutOfBounds, "LANDMARK_OUT_OF_BOUNDS")
TAILOR_DEFINE_ERROR(EmptyManifest, "EMPTY_MANIFEST")
TAILOR_DEFINE_ERROR(DegenerateSplit, "DEGENERATE_SPLIT")
TAILOR_DEFINE_ERROR(BatchLargerThanDataset, "BATCH_LARGER_THAN_DATASET")
TAILOR_DEFINE_ERROR(UnwritableOutputDir, "UNWRITABLE_OUTPUT_DIR")
TAILOR_DEFINE_ERROR(ImageDecodeError, "IMAGE_DECODE")

// preprocess
TAILOR_DEFINE_ERROR(MissingBackendWeights, "MISSING_BACKEND_WEIGHTS")
TAILOR_DEFINE_ERROR(MissingLandmark, "MISSING_LANDMARK")
TAILOR_DEFINE_ERROR(InvalidRegion, "INVALID_REGION")

// tailor-net / objectives
TAILOR_DEFINE_ERROR(ShapeMismatch, "SHAPE_MISMATCH")
TAILOR_DEFINE_ERROR(ExtractorUnavailable, "EXTRACTOR_UNAVAILABLE")

// trainer
TAILOR_DEFINE_ERROR(DataEmpty, "DATA_EMPTY")
TAILOR_DEFINE_ERROR(SingleClassDataset, "SINGLE_CLASS_DATASET")
TAILOR_DEFINE_ERROR(StageMismatch, "STAGE_MISMATCH")
TAILOR_DEFINE_ERROR(CorruptCheckpoint, "CORRUPT_CHECKPOINT")
TAILOR_DEFINE_ERROR(InvalidConfig, "INVALID_CONFIG")

// eval-metrics
TAILOR_DEFINE_ERROR(InsufficientClasses, "INSUFFICIENT_CLASSES")
TAILOR_DEFINE_ERROR(ClassifierUnavailable, "CLASSIFIER_UNAVAILABLE")

#undef TAILOR_DEFINE_ERROR

class SchemaViolation : public Error {
public:
    SchemaViolation(std::size_t line, std::string field, const std::string& detail)
        : Error("SCHEMA_VIOLATION",
                "line " + std::to_string(line) + ", field '" + field + "': " + detail),
          line_(line),
          field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(long step, const std::string& detail)
        : Error("NON_FINITE_LOSS",
                "non-finite loss at step " + std::to_string(step) + ": " + detail),
          step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace tailor
