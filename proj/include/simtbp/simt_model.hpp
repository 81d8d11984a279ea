#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "simtbp/core.hpp"

namespace simtbp {

/// A visible source prefix. `complete` means the end-of-source marker has been read.
struct SourceView {
  std::span<const TokenId> tokens;
  bool complete = false;
};

/// Monotone lexical transducer: target token j translates source token j,
/// optionally conditioned on the source token that follows it.
class Lexicon {
 public:
  static constexpr TokenId kNone = -1;

  Vocabulary& source_vocab() { return source_; }
  Vocabulary& target_vocab() { return target_; }
  const Vocabulary& source_vocab() const { return source_; }
  const Vocabulary& target_vocab() const { return target_; }

  void add_default(std::string_view src, std::string_view tgt) {
    auto s = source_.intern(src);
    grow(s);
    if (defaults_[static_cast<std::size_t>(s)] != kNone) {
      throw Error("duplicate lexicon entry: " + std::string(src) + " *");
    }
    defaults_[static_cast<std::size_t>(s)] = target_.intern(tgt);
  }

  void add_conditional(std::string_view src, std::string_view next, std::string_view tgt) {
    auto s = source_.intern(src);
    auto n = source_.intern(next);
    grow(std::max(s, n));
    if (!conditional_.emplace(key(s, n), target_.intern(tgt)).second) {
      throw Error("duplicate lexicon entry: " + std::string(src) + " " + std::string(next));
    }
    ambiguous_[static_cast<std::size_t>(s)] = true;
    order_.emplace_back(s, n);
  }

  /// Every non-reserved source token must have a default rule.
  void validate() const {
    for (std::size_t s = kFirstRegular; s < source_.size(); ++s) {
      if (s >= defaults_.size() || defaults_[s] == kNone) {
        throw Error("missing default rule for " + source_.surface(static_cast<TokenId>(s)));
      }
    }
  }

  bool knows(TokenId src) const {
    return src >= kFirstRegular && static_cast<std::size_t>(src) < defaults_.size() &&
           defaults_[static_cast<std::size_t>(src)] != kNone;
  }

  bool is_ambiguous(TokenId src) const {
    return src >= 0 && static_cast<std::size_t>(src) < ambiguous_.size() &&
           ambiguous_[static_cast<std::size_t>(src)];
  }

  /// `next` is kNone when no successor is visible.
  TokenId translate(TokenId src, TokenId next) const {
    if (!knows(src)) throw Error("unknown source token");
    if (next != kNone && is_ambiguous(src)) {
      auto it = conditional_.find(key(src, next));
      if (it != conditional_.end()) return it->second;
    }
    return defaults_[static_cast<std::size_t>(src)];
  }

  std::size_t conditional_count() const { return conditional_.size(); }

  /// TSV: source, condition ("*" for default), target. Defaults first.
  std::string to_tsv() const {
    std::string out;
    for (std::size_t s = kFirstRegular; s < defaults_.size(); ++s) {
      if (defaults_[s] == kNone) continue;
      out += source_.surface(static_cast<TokenId>(s)) + "\t*\t" + target_.surface(defaults_[s]) + "\n";
    }
    for (auto [s, n] : order_) {
      out += source_.surface(s) + "\t" + source_.surface(n) + "\t" +
             target_.surface(conditional_.at(key(s, n))) + "\n";
    }
    return out;
  }

  static Lexicon from_tsv(const std::vector<std::string>& lines) {
    Lexicon lex;
    int lineno = 0;
    for (const auto& raw : lines) {
      ++lineno;
      if (raw.empty()) continue;
      std::vector<std::string> cols;
      std::size_t pos = 0;
      while (true) {
        auto tab = raw.find('\t', pos);
        cols.push_back(raw.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
      }
      if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
        throw Error("lexicon line " + std::to_string(lineno) + ": expected 3 tab-separated columns");
      }
      if (cols[1] == "*") {
        lex.add_default(cols[0], cols[2]);
      } else {
        lex.add_conditional(cols[0], cols[1], cols[2]);
      }
    }
    lex.validate();
    return lex;
  }

 private:
  static std::uint64_t key(TokenId s, TokenId n) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)) << 32) |
           static_cast<std::uint32_t>(n);
  }

  void grow(TokenId id) {
    auto need = static_cast<std::size_t>(id) + 1;
    if (defaults_.size() < need) {
      defaults_.resize(need, kNone);
      ambiguous_.resize(need, false);
    }
  }

  Vocabulary source_;
  Vocabulary target_;
  std::vector<TokenId> defaults_;
  std::vector<bool> ambiguous_;
  std::unordered_map<std::uint64_t, TokenId> conditional_;
  std::vector<std::pair<TokenId, TokenId>> order_;
};

enum class PolicyKind { kWaitK, kAdaptive };

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kWaitK;
  int k = 1;
  double latency_weight = 0.0;

  static PolicyConfig wait_k(int k) {
    if (k < 1) throw Error("wait-k requires k >= 1");
    return {PolicyKind::kWaitK, k, 0.0};
  }

  static PolicyConfig adaptive(double latency_weight) {
    if (!(latency_weight > 0.0 && latency_weight <= 1.0)) {
      throw Error("adaptive policy requires latency weight in (0, 1]");
    }
    return {PolicyKind::kAdaptive, 0, latency_weight};
  }

  /// Write threshold of the adaptive policy. Decreasing in L: a heavier
  /// latency weight accepts less confident writes. L >= 0.6 accepts writes of
  /// ambiguous tokens whose conditioner has not been read yet.
  double threshold() const { return std::clamp(1.1 - latency_weight, 0.0, 1.0); }

  std::string name() const { return kind == PolicyKind::kWaitK ? "wait-k" : "adaptive"; }
  double param() const { return kind == PolicyKind::kWaitK ? k : latency_weight; }
};

/// f(source prefix, target prefix) -> next target token, PHI (read) or EOS.
/// Stateless: the result depends on the arguments only.
class SimtModel {
 public:
  SimtModel(std::shared_ptr<const Lexicon> lexicon, PolicyConfig policy)
      : lexicon_(std::move(lexicon)), policy_(policy) {
    if (!lexicon_) throw Error("null lexicon");
  }

  const Lexicon& lexicon() const { return *lexicon_; }
  const PolicyConfig& policy() const { return policy_; }
  const Vocabulary& source_vocab() const { return lexicon_->source_vocab(); }
  const Vocabulary& target_vocab() const { return lexicon_->target_vocab(); }

  TokenId step(SourceView source, std::span<const TokenId> target_prefix) const {
    const auto written = target_prefix.size();
    const auto visible = source.tokens.size();
    switch (policy_.kind) {
      case PolicyKind::kWaitK:
        if (!source.complete && visible < written + static_cast<std::size_t>(policy_.k)) return kPhi;
        break;
      case PolicyKind::kAdaptive:
        if (written >= visible) break;
        if (confidence(source, written) + 1e-9 < policy_.threshold()) return kPhi;
        break;
    }
    if (written >= visible) return source.complete ? kEos : kPhi;
    return translate_at(source, written);
  }

  /// Confidence of writing the translation of source position `pos`.
  double confidence(SourceView source, std::size_t pos) const {
    const bool successor_known = pos + 1 < source.tokens.size() || source.complete;
    return (!lexicon_->is_ambiguous(source.tokens[pos]) || successor_known) ? 1.0 : 0.5;
  }

 private:
  TokenId translate_at(SourceView source, std::size_t pos) const {
    auto next = pos + 1 < source.tokens.size() ? source.tokens[pos + 1] : Lexicon::kNone;
    return lexicon_->translate(source.tokens[pos], next);
  }

  std::shared_ptr<const Lexicon> lexicon_;
  PolicyConfig policy_;
};

/// Offline translation with the whole source visible.
inline Sentence full_sentence_translate(const Lexicon& lexicon, std::span<const TokenId> source) {
  if (source.empty()) throw Error("empty source");
  Sentence out;
  out.reserve(source.size());
  for (std::size_t n = 0; n < source.size(); ++n) {
    auto next = n + 1 < source.size() ? source[n + 1] : Lexicon::kNone;
    out.push_back(lexicon.translate(source[n], next));
  }
  return out;
}

}  // namespace simtbp
