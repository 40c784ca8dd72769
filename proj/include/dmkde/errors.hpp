#pragma once

#include <stdexcept>
#include <string>

namespace dmkde {

/// Invalid argument: bad dimensions, non-positive hyperparameters, range violations.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// The feature map produced an (all-zero) vector that cannot be normalized.
struct DegenerateEmbeddingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A density model collapsed (zero training-state sum, zero normalization integral).
struct DegenerateModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training loss became non-finite.
struct TrainingDivergedError : std::runtime_error {
    TrainingDivergedError(const std::string& what, int epoch_)
        : std::runtime_error(what), epoch(epoch_) {}
    int epoch;
};

/// Numerical failure (eigensolver non-convergence and the like).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries row/column location where known.
struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Error raised inside an experiment, prefixed with the pipeline stage name.
struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dmkde
