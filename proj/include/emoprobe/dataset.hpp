#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/embedding_store.hpp"
#include "emoprobe/trainer.hpp"

namespace emoprobe {

// L x D matrix of time-pooled layers for one record.
Eigen::MatrixXd pooled_stack(const EmbeddingRecord& record);

enum class InputKind {
  pooled_layer,  // D x 1, one time-pooled layer
  pooled_stack,  // L x D, every time-pooled layer
  sequence,      // T x D, frames of one layer
};

struct SplitSets {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;

  LabeledSet& operator[](Split s) { return s == Split::train ? train : (s == Split::val ? val : test); }
  const LabeledSet& operator[](Split s) const {
    return s == Split::train ? train : (s == Split::val ? val : test);
  }
};

// Records of `domain`, routed by the manifest split. `layer` is 0-based and
// ignored for pooled_stack.
SplitSets build_split_sets(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest,
                           Domain domain, InputKind kind, std::size_t layer = 0);

}  // namespace emoprobe
