#pragma once

#include <stdexcept>
#include <string>

namespace qarm {

// Training hit a non-finite loss; the message names the offending step.
struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& what)
      : std::runtime_error(what) {}
};

// An on-disk artifact no longer matches the checksum recorded when it was
// produced (or a codebook no longer matches the matrix it was built from).
struct StaleArtifact : std::runtime_error {
  explicit StaleArtifact(const std::string& what) : std::runtime_error(what) {}
};

// A ranking metric is undefined for the given inputs (e.g. single-class
// labels). Callers decide whether to skip or propagate.
struct UndefinedMetric : std::runtime_error {
  explicit UndefinedMetric(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace qarm
