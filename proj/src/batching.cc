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

#include "apc/batching.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "apc/error.h"

namespace apc {
namespace {

std::uint64_t Mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

BatchPlan Finish(std::span<const std::size_t> lengths, std::vector<std::vector<std::size_t>> batches) {
  BatchPlan plan;
  double padded = 0, cells = 0;
  for (const auto& b : batches) {
    plan.max_padding_ratio = std::max(plan.max_padding_ratio, PaddingRatio(lengths, b));
    std::size_t longest = 0, used = 0;
    for (auto i : b) {
      longest = std::max(longest, lengths[i]);
      used += lengths[i];
    }
    cells += static_cast<double>(longest * b.size());
    padded += static_cast<double>(longest * b.size() - used);
  }
  plan.mean_padding_ratio = cells > 0 ? padded / cells : 0.0;
  plan.batches = std::move(batches);
  return plan;
}

std::vector<std::size_t> Shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::vector<std::size_t>> Chunk(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += size) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + size));
  }
  return out;
}

void CheckArgs(std::span<const std::size_t> lengths, std::size_t batch_size) {
  if (lengths.empty()) throw InputError("make_batches: empty dataset");
  if (batch_size == 0) throw ConfigError("make_batches: batch size must be positive");
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Mix(Mix(Mix(seed) ^ a) ^ b);
}

double PaddingRatio(std::span<const std::size_t> lengths, std::span<const std::size_t> batch) {
  std::size_t longest = 0, used = 0;
  for (auto i : batch) {
    longest = std::max(longest, lengths[i]);
    used += lengths[i];
  }
  if (longest == 0) return 0.0;
  return 1.0 - static_cast<double>(used) / static_cast<double>(longest * batch.size());
}

BatchPlan MakeBatches(std::span<const std::size_t> lengths, std::size_t batch_size,
                      std::uint64_t seed, std::uint64_t epoch) {
  CheckArgs(lengths, batch_size);
  std::mt19937_64 rng(DeriveSeed(seed, epoch, 0xba7c4));
  auto order = Shuffled(lengths.size(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  auto batches = Chunk(order, batch_size);
  std::shuffle(batches.begin(), batches.end(), rng);
  return Finish(lengths, std::move(batches));
}

BatchPlan RandomBatches(std::span<const std::size_t> lengths, std::size_t batch_size,
                        std::uint64_t seed, std::uint64_t epoch) {
  CheckArgs(lengths, batch_size);
  std::mt19937_64 rng(DeriveSeed(seed, epoch, 0x7a2d));
  return Finish(lengths, Chunk(Shuffled(lengths.size(), rng), batch_size));
}

}  // namespace apc
