#pragma once

// Straight-line reference implementations used as test oracles. Nothing here
// calls into the library code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

struct Mined {
  std::vector<std::size_t> hard_abnormal, easy_abnormal, hard_normal, easy_normal;
};

inline std::vector<int> threshold(const std::vector<double>& s, double eps) {
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i] > eps ? 1 : 0;
  return y;
}

inline std::vector<int> erode(const std::vector<int>& y, std::size_t width) {
  const long r = static_cast<long>(width / 2), n = static_cast<long>(y.size());
  std::vector<int> out(y.size(), 0);
  for (long t = 0; t < n; ++t) {
    int all = 1;
    for (long j = t - r; j <= t + r; ++j) {
      long src = j < 0 ? 0 : (j >= n ? n - 1 : j);
      if (y[src] == 0) all = 0;
    }
    out[t] = all;
  }
  return out;
}

inline std::vector<std::size_t> edges(const std::vector<int>& y, std::size_t width) {
  const auto e = erode(y, width);
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < y.size(); ++t)
    if (y[t] == 1 && e[t] == 0) out.push_back(t);
  return out;
}

inline std::vector<std::size_t> missed(const std::vector<int>& y, std::size_t K, std::size_t R) {
  std::set<std::size_t> flagged;
  for (std::size_t s = 0; s + K <= y.size(); ++s) {
    std::size_t count = 0;
    for (std::size_t t = s; t < s + K; ++t) count += y[t];
    if (count >= R)
      for (std::size_t t = s; t < s + K; ++t)
        if (y[t] == 0) flagged.insert(t);
  }
  return {flagged.begin(), flagged.end()};
}

// Indices ordered by score (descending if `largest`), ties to the lower index.
inline std::vector<std::size_t> ranked(const std::vector<double>& s, bool largest) {
  std::vector<std::pair<double, std::size_t>> v;
  for (std::size_t i = 0; i < s.size(); ++i) v.push_back({largest ? -s[i] : s[i], i});
  std::sort(v.begin(), v.end());
  std::vector<std::size_t> out;
  for (const auto& p : v) out.push_back(p.second);
  return out;
}

inline std::vector<std::size_t> first_k_sorted(std::vector<std::size_t> idx, std::size_t k) {
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct MiningParams {
  double eps = 0.5;
  std::size_t width = 3, K = 5, R = 3, k_hard_normal = 3, k_easy = 3;
};

inline Mined mine_video(const std::vector<double>& s, int label, const MiningParams& p) {
  Mined m;
  if (label == 1) {
    const auto y = threshold(s, p.eps);
    std::set<std::size_t> ha;
    for (auto t : edges(y, p.width)) ha.insert(t);
    if (p.K <= s.size())
      for (auto t : missed(y, p.K, p.R)) ha.insert(t);
    m.hard_abnormal.assign(ha.begin(), ha.end());
    for (auto t : first_k_sorted(ranked(s, true), p.k_easy))
      if (!ha.count(t)) m.easy_abnormal.push_back(t);
  } else {
    m.hard_normal = first_k_sorted(ranked(s, true), p.k_hard_normal);
    m.easy_normal = first_k_sorted(ranked(s, false), p.k_easy);
  }
  return m;
}

// Mann-Whitney by explicit pair counting, in doubled units so ties stay integral.
inline double auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::uint64_t doubled = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg) += 1;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) doubled += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// For each positive: its rank with negatives placed first inside score ties and
// positives kept in index order, and the number of positives at or above it.
inline double average_precision(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> terms;  // (rank, hits)
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    std::uint64_t rank = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool above = s[j] > s[i] || (s[j] == s[i] && (!y[j] || j <= i));
      if (above) {
        ++rank;
        if (y[j]) ++hits;
      }
    }
    terms.push_back({rank, hits});
  }
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (const auto& [rank, hits] : terms) acc += static_cast<double>(hits) / static_cast<double>(rank);
  return acc / static_cast<double>(terms.size());
}

}  // namespace oracle
