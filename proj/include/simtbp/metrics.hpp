#pragma once

// Latency, stability and quality metrics computed from snapshot matrices and
// final outputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simtbp/core.hpp"
#include "simtbp/engine.hpp"
#include "simtbp/rng.hpp"

namespace simtbp {

/// Exact fraction; converted to double with a single rounding.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t n, std::int64_t d) {
    if (d == 0) throw Error("zero denominator");
    if (d < 0) n = -n, d = -d;
    auto g = std::gcd(n < 0 ? -n : n, d);
    if (g > 1) n /= g, d /= g;
    return {n, d};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend Rational operator-(Rational a, Rational b) { return make(a.num * b.den - b.num * a.den, a.den * b.den); }
  bool operator==(const Rational&) const = default;
};

struct DelayVector {
  std::vector<int> g;
  int source_len = 0;

  std::size_t target_len() const { return g.size(); }
  bool operator==(const DelayVector&) const = default;
};

/// g_j: smallest read index i such that every row from i on agrees with the
/// final output on positions 1..j. Rows shorter than j disagree.
inline DelayVector delay_vector(const SnapshotMatrix& snapshots) {
  if (snapshots.rows.empty()) throw Error("empty snapshot matrix");
  const auto& final_row = snapshots.final_row();
  const std::size_t rows = snapshots.rows.size();
  const std::size_t target_len = final_row.size();

  // stable[i] = min over rows i' >= i of the common prefix length with the final row.
  std::vector<std::size_t> stable(rows);
  std::size_t running = target_len;
  for (std::size_t i = rows; i-- > 0;) {
    const auto& row = snapshots.rows[i];
    std::size_t lcp = 0;
    while (lcp < row.size() && lcp < target_len && row[lcp] == final_row[lcp]) ++lcp;
    running = std::min(running, lcp);
    stable[i] = running;
  }

  DelayVector out;
  out.source_len = static_cast<int>(rows);
  out.g.resize(target_len);
  std::size_t i = 0;
  for (std::size_t j = 1; j <= target_len; ++j) {
    while (stable[i] < j) ++i;  // stable[rows-1] == target_len
    out.g[j - 1] = static_cast<int>(i + 1);
  }
  return out;
}

/// Average lagging over all J positions, as an exact fraction:
///   AL = (1/J) * sum_j [ g_j - (j-1) / (J/I) ]
inline Rational average_lagging_exact(const DelayVector& d) {
  const auto J = static_cast<std::int64_t>(d.g.size());
  const std::int64_t I = d.source_len;
  if (J == 0) throw Error("empty output");
  if (I < 1) throw Error("empty source");
  std::int64_t sum = 0;
  for (int g : d.g) sum += g;
  return Rational::make(2 * sum - I * (J - 1), 2 * J);
}

inline double average_lagging(const DelayVector& d) { return average_lagging_exact(d).value(); }

/// Variant that stops at the first position written after the whole source was
/// read. Not the default; kept for cross-checking against other toolkits.
inline double average_lagging_cutoff(const DelayVector& d) {
  const auto J = static_cast<std::int64_t>(d.g.size());
  const std::int64_t I = d.source_len;
  if (J == 0) throw Error("empty output");
  std::int64_t cut = J;
  for (std::int64_t j = 0; j < J; ++j) {
    if (d.g[static_cast<std::size_t>(j)] >= I) {
      cut = j + 1;
      break;
    }
  }
  std::int64_t sum = 0;
  for (std::int64_t j = 0; j < cut; ++j) sum += d.g[static_cast<std::size_t>(j)];
  return Rational::make(2 * J * sum - I * cut * (cut - 1), 2 * J * cut).value();
}

inline double awr(std::size_t withdrawals, std::size_t target_len) {
  if (target_len == 0) throw Error("empty output");
  return static_cast<double>(withdrawals) / static_cast<double>(target_len);
}

struct MetricsReport {
  std::string corpus;
  double al = 0.0;
  Rational al_exact;
  double awr = 0.0;
  std::optional<double> bleu;
  std::optional<double> al_diff;
  std::size_t withdrawals = 0;
  std::size_t target_len = 0;
  std::size_t source_len = 0;
  std::size_t speculations = 0;
  std::size_t hits = 0;
};

inline MetricsReport report(const RunResult& run, std::string corpus = {}) {
  MetricsReport m;
  m.corpus = std::move(corpus);
  auto d = delay_vector(run.snapshots);
  m.al_exact = average_lagging_exact(d);
  m.al = m.al_exact.value();
  m.withdrawals = run.withdrawals;
  m.target_len = d.g.size();
  m.source_len = static_cast<std::size_t>(d.source_len);
  m.speculations = run.speculations;
  m.hits = run.hits;
  m.awr = awr(m.withdrawals, m.target_len);
  return m;
}

/// AL(baseline) - AL(speculative); positive when speculation lowered latency.
inline double al_diff(const MetricsReport& baseline, const MetricsReport& speculative) {
  if (baseline.corpus != speculative.corpus) throw Error("corpus mismatch");
  return (baseline.al_exact - speculative.al_exact).value();
}

// ---------------------------------------------------------------------------
// BLEU-4, corpus level, no smoothing.

struct BleuStats {
  std::array<std::int64_t, 4> clipped{};
  std::array<std::int64_t, 4> total{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < 4; ++n) clipped[n] += o.clipped[n], total[n] += o.total[n];
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }

  double score() const {
    if (hyp_len == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      if (clipped[n] == 0 || total[n] == 0) return 0.0;
      log_sum += std::log(static_cast<double>(clipped[n]) / static_cast<double>(total[n]));
    }
    const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    return bp * std::exp(log_sum / 4.0);
  }
};

inline BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  BleuStats st;
  st.hyp_len = static_cast<std::int64_t>(hyp.size());
  st.ref_len = static_cast<std::int64_t>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<TokenId>, std::int64_t> ref_counts;
    for (std::size_t p = 0; p + n <= ref.size(); ++p) ++ref_counts[{ref.begin() + p, ref.begin() + p + n}];
    std::map<std::vector<TokenId>, std::int64_t> hyp_counts;
    for (std::size_t p = 0; p + n <= hyp.size(); ++p) ++hyp_counts[{hyp.begin() + p, hyp.begin() + p + n}];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      st.clipped[n - 1] += std::min(c, it == ref_counts.end() ? 0 : it->second);
      st.total[n - 1] += c;
    }
  }
  return st;
}

inline BleuStats corpus_bleu_stats(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  if (hyps.size() != refs.size()) throw Error("hypothesis/reference count mismatch");
  if (hyps.empty()) throw Error("empty corpus");
  BleuStats st;
  for (std::size_t n = 0; n < hyps.size(); ++n) st += bleu_stats(hyps[n], refs[n]);
  return st;
}

inline double corpus_bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  return corpus_bleu_stats(hyps, refs).score();
}

// ---------------------------------------------------------------------------

/// One-sided paired bootstrap: the fraction of resamples whose mean difference
/// is <= 0. Small values support "a > b".
inline double bootstrap_p_value(std::span<const double> diffs, std::size_t resamples = 2000,
                                std::uint64_t seed = 1) {
  if (diffs.empty()) throw Error("empty sample");
  Rng rng(seed);
  std::size_t not_better = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t n = 0; n < diffs.size(); ++n) sum += diffs[rng.below(diffs.size())];
    not_better += sum <= 0.0;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

}  // namespace simtbp
