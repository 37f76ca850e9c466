// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ulab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSpecError : public Error {
public:
    using Error::Error;
};

class UnknownTokenError : public Error {
public:
    explicit UnknownTokenError(std::string token)
        : Error("unknown token '" + token + "'"), token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DegenerateVocabError : public Error {
public:
    using Error::Error;
};

class InvalidHyperparameterError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointFormatError : public Error {
public:
    using Error::Error;
};

/// A loss evaluated to NaN or Inf. Carries the index of the offending sequence in its batch.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::size_t batch_index)
        : Error(what + " (batch index " + std::to_string(batch_index) + ")"), batch_index_(batch_index) {}

    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

/// Training loss left the finite range or exceeded the divergence threshold.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace ulab
