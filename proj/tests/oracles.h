// Copyright 2026 The apcspeech Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APC_TESTS_ORACLES_H_
#define APC_TESTS_ORACLES_H_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "apc/apc.h"

namespace apc::testing {

// Frame t of the probe sequence has entries 1000 t + j, so every value names
// its own position.
inline FeatureSequence IndexedSequence(std::size_t n_frames, std::size_t dim) {
  FeatureSequence x{Tensor<float>(n_frames, dim), "indexed", "spk"};
  for (std::size_t t = 0; t < n_frames; ++t)
    for (std::size_t j = 0; j < dim; ++j) x.frames(t, j) = static_cast<float>(1000 * t + j);
  return x;
}

// Brute force: every (input, target) index pair at distance exactly n, in
// increasing order of the input index.
inline std::vector<std::pair<std::size_t, std::size_t>> ShiftPairsBruteForce(std::size_t n_frames,
                                                                              std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < n_frames; ++a)
    for (std::size_t b = 0; b < n_frames; ++b)
      if (b == a + n) out.emplace_back(a, b);
  return out;
}

// Returns an empty string when shift_targets agrees with the brute-force
// reconstruction for every N <= max_frames and 1 <= n < N.
inline std::string CheckShiftTargetsExhaustive(std::size_t max_frames, std::size_t dim) {
  for (std::size_t N = 2; N <= max_frames; ++N) {
    const auto x = IndexedSequence(N, dim);
    for (std::size_t n = 1; n < N; ++n) {
      const auto got = ShiftTargets(x, n);
      const auto want = ShiftPairsBruteForce(N, n);
      const std::string where = "N=" + std::to_string(N) + " n=" + std::to_string(n);
      if (!got) return where + ": no pair returned";
      if (got->inputs.rows() != want.size() || got->targets.rows() != want.size()) {
        return where + ": wrong pair count";
      }
      for (std::size_t i = 0; i < want.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) {
          if (got->inputs(i, j) != x.frames(want[i].first, j) ||
              got->targets(i, j) != x.frames(want[i].second, j)) {
            return where + ": mismatch at pair " + std::to_string(i);
          }
        }
    }
  }
  return "";
}

}  // namespace apc::testing

#endif  // APC_TESTS_ORACLES_H_
