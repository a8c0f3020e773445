#pragma once

#include <stdexcept>
#include <string>

namespace fgbp {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// IoError -> 1, ValidationError family -> 2, CapacityError -> 3,
// CheckpointError -> 4.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes or widths disagree.
struct DimensionError : Error {
  using Error::Error;
};

// An index (class label, state, target) is out of range.
struct IndexError : Error {
  using Error::Error;
};

// Inputs violate a documented precondition (unnormalized q, bad config, ...).
struct ValidationError : Error {
  using Error::Error;
};

// Graph construction failed (dangling scope, duplicate id, empty scope, ...).
struct ConstructionError : Error {
  using Error::Error;
};

// A size guard tripped (state-space enumeration, factor arity, table size).
struct CapacityError : Error {
  using Error::Error;
};

// The operation needs data the object does not carry (e.g. a feature-only
// factor asked for its table).
struct UnsupportedOperationError : Error {
  using Error::Error;
};

// Checkpoint widths disagree with the requested model.
struct CheckpointError : Error {
  using Error::Error;
};

// File system problems.
struct IoError : Error {
  using Error::Error;
};

// Aggregating an empty collection.
struct AggregationError : Error {
  using Error::Error;
};

}  // namespace fgbp
