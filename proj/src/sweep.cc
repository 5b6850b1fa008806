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

#include "apc/sweep.h"

#include <algorithm>
#include <cstdio>
#include <exception>

#include "apc/error.h"

namespace apc {

const char* SweepProtocolName(SweepProtocol p) {
  switch (p) {
    case SweepProtocol::kNSweep:
      return "n";
    case SweepProtocol::kDataFraction:
      return "fraction";
    case SweepProtocol::kEncoderDepth:
      return "depth";
    case SweepProtocol::kUttsPerSpeaker:
      return "utts-per-speaker";
  }
  return "?";
}

SweepProtocol ParseSweepProtocol(const std::string& name) {
  for (auto p : {SweepProtocol::kNSweep, SweepProtocol::kDataFraction, SweepProtocol::kEncoderDepth,
                 SweepProtocol::kUttsPerSpeaker}) {
    if (name == SweepProtocolName(p)) return p;
  }
  throw ConfigError("sweep: unknown protocol '" + name + "' (n, fraction, depth, utts-per-speaker)");
}

std::vector<SweepColumn> SweepColumns(SweepProtocol p) {
  switch (p) {
    case SweepProtocol::kNSweep:
      return {{"1", 1}, {"2", 2}, {"3", 3}, {"5", 5}, {"10", 10}, {"20", 20}};
    case SweepProtocol::kDataFraction:
      return {{"1", 1}, {"1/2", 2}, {"1/4", 4}, {"1/8", 8}, {"1/16", 16}, {"1/32", 32}};
    case SweepProtocol::kEncoderDepth:
      return {{"1", 1}, {"2", 2}, {"3", 3}, {"4", 4}};
    case SweepProtocol::kUttsPerSpeaker:
      return {{"1", 1}, {"5", 5}, {"10", 10}, {"20", 20}, {"50", 50}, {"full", 0}};
  }
  return {};
}

const char* SweepAxisName(SweepProtocol p) {
  switch (p) {
    case SweepProtocol::kNSweep:
      return "n";
    case SweepProtocol::kDataFraction:
      return "proportion of training data";
    case SweepProtocol::kEncoderDepth:
      return "encoder layers";
    case SweepProtocol::kUttsPerSpeaker:
      return "utterances per speaker";
  }
  return "?";
}

std::size_t FractionCount(std::size_t total, std::size_t divisor) {
  if (divisor == 0) throw ConfigError("sweep: fraction divisor must be positive");
  return std::max<std::size_t>(1, total / divisor);
}

std::string SweepTable::ToTsv() const {
  std::string out = "features";
  for (const auto& c : columns) out += "\t" + c.label;
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += rows[r];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = at(r, c);
      char buf[32] = "error";
      if (cell.value) std::snprintf(buf, sizeof buf, "%.4f", *cell.value);
      out += std::string("\t") + buf;
    }
    out += "\n";
  }
  return out;
}

nlohmann::json SweepTable::ToJson() const {
  nlohmann::json cols = nlohmann::json::array(), out_cells = nlohmann::json::array();
  for (const auto& c : columns) cols.push_back(c.label);
  for (const auto& c : cells) {
    nlohmann::json j = {{"row", c.row}, {"column", c.column}};
    if (c.value) j["value"] = *c.value;
    if (!c.error.empty()) j["error"] = c.error;
    out_cells.push_back(j);
  }
  return {{"protocol", SweepProtocolName(protocol)}, {"metric", metric}, {"rows", rows},
          {"columns", cols},                         {"cells", out_cells}};
}

SweepTable RunSweep(SweepProtocol protocol, std::vector<std::string> rows, std::string metric,
                    const SweepCellFn& cell, const SweepProgressFn& progress) {
  SweepTable table;
  table.protocol = protocol;
  table.metric = std::move(metric);
  table.rows = std::move(rows);
  table.columns = SweepColumns(protocol);
  for (const auto& row : table.rows) {
    for (const auto& col : table.columns) {
      SweepCell c{row, col.label, std::nullopt, {}};
      try {
        c.value = cell(row, col);
      } catch (const std::exception& e) {
        c.error = e.what();
        if (c.error.empty()) c.error = "unknown failure";
      }
      table.cells.push_back(c);
      if (progress) progress(table.cells.back());
    }
  }
  return table;
}

}  // namespace apc
