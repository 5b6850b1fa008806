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

#ifndef APC_BATCHING_H_
#define APC_BATCHING_H_

#include <cstdint>
#include <span>
#include <vector>

namespace apc {

// SplitMix64 mix of (seed, a, b); the source of every per-epoch and per-step
// random stream.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // item indices
  double max_padding_ratio = 0;   // worst batch
  double mean_padding_ratio = 0;  // padded cells over all cells
};

// 1 - sum(len) / (|batch| * max len).
double PaddingRatio(std::span<const std::size_t> lengths, std::span<const std::size_t> batch);

// Length-bucketed batches: shuffle by (seed, epoch), stable-sort by length so
// equal lengths stay shuffled, cut into consecutive chunks, shuffle the chunk
// order. Every item appears exactly once.
BatchPlan MakeBatches(std::span<const std::size_t> lengths, std::size_t batch_size,
                      std::uint64_t seed, std::uint64_t epoch);

// Plain shuffled batches with no bucketing, for comparison.
BatchPlan RandomBatches(std::span<const std::size_t> lengths, std::size_t batch_size,
                        std::uint64_t seed, std::uint64_t epoch);

}  // namespace apc

#endif  // APC_BATCHING_H_
