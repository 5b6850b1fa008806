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

#include "apc/metrics.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "apc/error.h"

namespace apc {
namespace {

template <typename Seq>
std::size_t Levenshtein(const Seq& a, const Seq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::pair<std::size_t, std::size_t> Edits(std::string_view hyp, std::string_view ref, ErrorUnit unit) {
  if (unit == ErrorUnit::kChar) return {EditDistance(hyp, ref), ref.size()};
  const auto h = SplitWords(hyp), r = SplitWords(ref);
  return {EditDistance(h, r), r.size()};
}

}  // namespace

std::size_t EditDistance(std::span<const std::string> hyp, std::span<const std::string> ref) {
  return Levenshtein(hyp, ref);
}

std::size_t EditDistance(std::string_view hyp, std::string_view ref) { return Levenshtein(hyp, ref); }

std::vector<std::string> SplitWords(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

double ErrorRate(std::string_view hyp, std::string_view ref, ErrorUnit unit) {
  const auto [edits, length] = Edits(hyp, ref, unit);
  if (length == 0) throw InputError("error rate: empty reference");
  return static_cast<double>(edits) / static_cast<double>(length);
}

double CorpusErrorRate(std::span<const std::string> hyps, std::span<const std::string> refs, ErrorUnit unit) {
  if (hyps.size() != refs.size()) throw InputError("error rate: hypothesis and reference counts differ");
  std::size_t edits = 0, length = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto [e, l] = Edits(hyps[i], refs[i], unit);
    if (l == 0) throw InputError("error rate: empty reference at index " + std::to_string(i));
    edits += e;
    length += l;
  }
  if (length == 0) throw InputError("error rate: no references");
  return static_cast<double>(edits) / static_cast<double>(length);
}

}  // namespace apc
