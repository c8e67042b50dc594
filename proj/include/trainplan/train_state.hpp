// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "trainplan/digest.hpp"

namespace trainplan {

struct DataCursor {
  std::uint64_t batch_index = 0;
  std::uint64_t offset = 0;

  friend bool operator==(const DataCursor&, const DataCursor&) = default;
};

// Logical training state. Model and optimizer tensors are stood in for by
// digests that evolve deterministically from the data each step consumed, so
// two runs agree on the digests iff they trained on the same batches in the
// same order. One step consumes one batch: after `step` steps the cursor is
// at batch `step`, offset 0.
struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t model_digest = 0;
  std::uint64_t optimizer_digest = 0;
  DataCursor cursor;
  std::uint64_t rng_state = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline TrainState initial_state(std::uint64_t seed) {
  TrainState s;
  s.model_digest = mix(kFnvOffset, seed);
  s.optimizer_digest = mix(s.model_digest, 0x6f7074ULL);
  s.rng_state = splitmix64(seed);
  return s;
}

inline std::uint64_t state_digest(const TrainState& s) {
  std::uint64_t d = mix(kFnvOffset, s.step);
  d = mix(d, s.model_digest);
  d = mix(d, s.optimizer_digest);
  d = mix(d, s.cursor.batch_index);
  d = mix(d, s.cursor.offset);
  return mix(d, s.rng_state);
}

}  // namespace trainplan
