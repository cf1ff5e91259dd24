// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace crome {

// Error taxonomy mapped to CLI exit codes (see tools/crome.cpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad shapes, dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Violated call contracts (non-scalar loss, unknown branch tag, ...).
struct ContractError : Error {
    using Error::Error;
};

// Token id out of range / unknown word.
struct VocabError : Error {
    using Error::Error;
};

// NaN/Inf encountered during training.
struct NumericError : Error {
    using Error::Error;
};

// Config file problems.
struct ConfigError : Error {
    using Error::Error;
};

// Data files: missing, unwritable, malformed, leakage.
struct DataError : Error {
    using Error::Error;
};

// Checkpoint file problems, split by kind so callers can distinguish them.
struct CheckpointCorruptError : Error {
    using Error::Error;
};
struct CheckpointVersionError : Error {
    using Error::Error;
};
struct CheckpointMissingTensorError : Error {
    using Error::Error;
};

// A verification command (grad-check etc.) found a violation.
struct VerificationError : Error {
    using Error::Error;
};

}  // namespace crome
