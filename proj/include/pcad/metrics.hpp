#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pcad/error.hpp"

namespace pcad {

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ArgumentError("scores and labels differ in length");
}

// Indices sorted by descending score; equal scores stay adjacent.
inline std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace detail

// Mann-Whitney form: P(s+ > s-) + 0.5 P(s+ = s-). Starts from all
// positive-negative pairs and, sweeping tie groups by descending score,
// subtracts the pairs each group's positives lose (full) or tie (half).
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::check_lengths(scores.size(), labels.size());
  const auto order = detail::descending(scores);
  double pairs = 0.0;
  std::size_t neg_above = 0, pos_total = 0, neg_total = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    pos_total += pos;
    neg_total += neg;
    // pairs this group's positives lose outright or tie
    pairs -= static_cast<double>(pos) * (static_cast<double>(neg_above) + 0.5 * static_cast<double>(neg));
    neg_above += neg;
    i = j;
  }
  if (pos_total == 0 || neg_total == 0)
    throw UndefinedMetricError("auroc needs both positive and negative labels");
  pairs += static_cast<double>(pos_total) * static_cast<double>(neg_total);
  return pairs / (static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

// Area under the precision-recall step curve (average precision): each tie
// group is one threshold step, contributing (recall gain) x (precision at
// that threshold).
inline double aupr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::check_lengths(scores.size(), labels.size());
  const auto order = detail::descending(scores);
  std::size_t pos_total = 0;
  for (auto l : labels) pos_total += l != 0;
  if (pos_total == 0) throw UndefinedMetricError("aupr needs at least one positive label");
  double area = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos += labels[order[j]] != 0;
      ++j;
    }
    tp += pos;
    seen += j - i;
    if (pos > 0)
      area += (static_cast<double>(pos) / static_cast<double>(pos_total)) *
              (static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  return area;
}

}  // namespace pcad
