// SPDX-License-Identifier: Apache-2.0
#include "asd/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "asd/errors.hpp"

namespace asd::metrics {

double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("average_precision: " + std::to_string(scores.size()) +
                    " scores vs " + std::to_string(labels.size()) + " labels");
  }
  std::size_t n_pos = 0;
  for (std::uint8_t l : labels) n_pos += l != 0;
  if (n_pos == 0) throw DataError("average_precision: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  // Descending score; ties keep original order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

GroupedResult map_over_groups(std::span<const GroupRow> rows) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<std::uint8_t>>>
      groups;
  for (const GroupRow& r : rows) {
    auto& g = groups[r.group];
    g.first.push_back(r.score);
    g.second.push_back(r.label);
  }
  GroupedResult res;
  double sum = 0.0;
  for (const auto& [name, g] : groups) {
    const bool has_pos =
        std::any_of(g.second.begin(), g.second.end(), [](std::uint8_t l) {
          return l != 0;
        });
    if (!has_pos) {
      res.groups_skipped += 1;
      continue;
    }
    sum += average_precision(g.first, g.second);
    res.groups_scored += 1;
  }
  if (res.groups_scored == 0) {
    throw DataError("map_over_groups: no group has a positive label");
  }
  res.map = sum / res.groups_scored;
  return res;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  return cells;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  *header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

std::size_t column_index(const std::vector<std::string>& header,
                         const std::string& name, const std::string& path) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError(path + ": missing column '" + name + "'");
}

}  // namespace

std::vector<ScoredFrame> read_scores_csv(const std::string& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  const std::size_t fi = column_index(header, "frame_index", path);
  const std::size_t si = column_index(header, "score", path);
  std::vector<ScoredFrame> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() <= std::max(fi, si)) throw DataError(path + ": short row");
    out.push_back({std::stoll(r[fi]), std::stod(r[si])});
  }
  return out;
}

std::vector<LabeledFrame> read_labels_csv(const std::string& path,
                                          const std::string& group_col) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  const std::size_t fi = column_index(header, "frame_index", path);
  const std::size_t li = column_index(header, "label", path);
  const std::size_t gi =
      group_col.empty() ? 0 : column_index(header, group_col, path);
  std::vector<LabeledFrame> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() <= li || (!group_col.empty() && r.size() <= gi)) {
      throw DataError(path + ": short row");
    }
    LabeledFrame f;
    f.frame_index = std::stoll(r[fi]);
    f.label = static_cast<std::uint8_t>(std::stoi(r[li]) != 0);
    if (!group_col.empty()) f.group = r[gi];
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<GroupRow> join_frames(const std::vector<ScoredFrame>& scores,
                                  const std::vector<LabeledFrame>& labels) {
  std::map<std::int64_t, const LabeledFrame*> by_frame;
  for (const LabeledFrame& l : labels) by_frame[l.frame_index] = &l;
  std::vector<GroupRow> rows;
  for (const ScoredFrame& s : scores) {
    auto it = by_frame.find(s.frame_index);
    if (it == by_frame.end()) continue;
    rows.push_back({it->second->group, s.score, it->second->label});
  }
  if (rows.empty()) {
    throw DataError("join_frames: no frame_index appears in both files");
  }
  return rows;
}

}  // namespace asd::metrics
