// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace asd::metrics {

// Average precision: sort by score descending (ties keep original order),
// AP = sum over positive ranks of precision@rank, divided by n_positives.
// Errors: no positive labels, length mismatch.
double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels);

struct GroupRow {
  std::string group;
  double score = 0.0;
  std::uint8_t label = 0;
};

struct GroupedResult {
  double map = 0.0;
  int groups_scored = 0;
  int groups_skipped = 0;  // groups without positives
};

GroupedResult map_over_groups(std::span<const GroupRow> rows);

struct ScoredFrame {
  std::int64_t frame_index = 0;
  double score = 0.0;
};

struct LabeledFrame {
  std::int64_t frame_index = 0;
  std::uint8_t label = 0;
  std::string group;  // empty when the labels file has no group column
};

// CSV helpers. scores: header `frame_index,score`; labels: header
// `frame_index,label[,<group_col>]`.
std::vector<ScoredFrame> read_scores_csv(const std::string& path);
std::vector<LabeledFrame> read_labels_csv(const std::string& path,
                                          const std::string& group_col = "");

// Inner join on frame_index.
std::vector<GroupRow> join_frames(const std::vector<ScoredFrame>& scores,
                                  const std::vector<LabeledFrame>& labels);

}  // namespace asd::metrics
