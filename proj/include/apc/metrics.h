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

#ifndef APC_METRICS_H_
#define APC_METRICS_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace apc {

enum class ErrorUnit { kWord, kChar };

// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t EditDistance(std::span<const std::string> hyp, std::span<const std::string> ref);
std::size_t EditDistance(std::string_view hyp, std::string_view ref);

std::vector<std::string> SplitWords(std::string_view text);

// Edit distance over words or characters divided by the reference length.
// Throws InputError for an empty reference.
double ErrorRate(std::string_view hyp, std::string_view ref, ErrorUnit unit);

// Corpus-level rate: total edits over total reference length.
double CorpusErrorRate(std::span<const std::string> hyps, std::span<const std::string> refs, ErrorUnit unit);

}  // namespace apc

#endif  // APC_METRICS_H_
