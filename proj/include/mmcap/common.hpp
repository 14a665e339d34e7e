#pragma once

#include <stdexcept>
#include <string>

namespace mmcap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation received an empty sequence it cannot reduce over.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or unknown configuration (modes, modality lists, flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller violated an API precondition (non-scalar loss, bad epsilon, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Token id outside the vocabulary.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Corpus/dataset level problems (empty split, id mismatch, missing files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (WAV, feature file, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmcap
