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

#ifndef APC_SWEEP_H_
#define APC_SWEEP_H_

// Grid runners for the transfer experiments. Each cell is one probe run; a
// failing cell is recorded and the sweep moves on.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace apc {

enum class SweepProtocol { kNSweep, kDataFraction, kEncoderDepth, kUttsPerSpeaker };

const char* SweepProtocolName(SweepProtocol p);  // n | fraction | depth | utts-per-speaker
SweepProtocol ParseSweepProtocol(const std::string& name);

struct SweepColumn {
  std::string label;
  // n, fraction divisor, encoder depth, or utterances per speaker (0: all).
  std::size_t value = 0;
};

std::vector<SweepColumn> SweepColumns(SweepProtocol p);
// Column header caption.
const char* SweepAxisName(SweepProtocol p);

// floor(total / divisor), never below one.
std::size_t FractionCount(std::size_t total, std::size_t divisor);

struct SweepCell {
  std::string row;
  std::string column;
  std::optional<double> value;
  std::string error;  // set when the cell failed
};

struct SweepTable {
  SweepProtocol protocol = SweepProtocol::kNSweep;
  std::string metric;
  std::vector<std::string> rows;
  std::vector<SweepColumn> columns;
  std::vector<SweepCell> cells;  // row-major

  const SweepCell& at(std::size_t row, std::size_t col) const { return cells.at(row * columns.size() + col); }
  // Header "features" then column labels; failed cells print as "error".
  std::string ToTsv() const;
  nlohmann::json ToJson() const;
};

using SweepCellFn = std::function<double(const std::string& row, const SweepColumn& column)>;
// Called after each cell, in evaluation order.
using SweepProgressFn = std::function<void(const SweepCell& cell)>;

// Evaluates rows x columns in row-major order.
SweepTable RunSweep(SweepProtocol protocol, std::vector<std::string> rows, std::string metric,
                    const SweepCellFn& cell, const SweepProgressFn& progress = {});

}  // namespace apc

#endif  // APC_SWEEP_H_
