#pragma once

#include <cmath>
#include <concepts>
#include <cstdio>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simtbp/core.hpp"

namespace simtbp {

struct Prediction {
  TokenId token = kEos;
  double probability = 1.0;

  bool operator==(const Prediction&) const = default;
};

/// Anything that guesses the next source token from the real source prefix.
template <typename P>
concept BranchPredictorLike = requires(const P& p, std::span<const TokenId> context) {
  { p.predict(context) } -> std::same_as<Prediction>;
  { p.vocab_size() } -> std::convertible_to<std::size_t>;
};

// ---------------------------------------------------------------------------
// N-gram model: interpolated add-alpha with a fixed backoff weight.
//
//   p_1(w)     = (c(w) + alpha) / (N + alpha * |S|)
//   p_m(w | h) = beta * c(h, w) / c(h) + (1 - beta) * p_{m-1}(w | h')   if c(h) > 0
//              = p_{m-1}(w | h')                                        otherwise
//
// h' drops the oldest token of h. S, the support, is EOS plus every regular
// token of the vocabulary. Contexts are BOS-padded.

class NgramModel {
 public:
  struct Row {
    std::map<TokenId, std::uint64_t> counts;
    std::uint64_t total = 0;
  };
  using Table = std::map<std::vector<TokenId>, Row>;

  NgramModel(Vocabulary vocab, int order, double alpha, double beta)
      : vocab_(std::move(vocab)), order_(order), alpha_(alpha), beta_(beta) {
    if (order < 1) throw Error("invalid order");
    if (!(alpha > 0.0)) throw Error("alpha must be > 0");
    if (!(beta > 0.0 && beta < 1.0)) throw Error("beta must be in (0, 1)");
    tables_.resize(static_cast<std::size_t>(order));
    support_.push_back(kEos);
    for (auto id = kFirstRegular; static_cast<std::size_t>(id) < vocab_.size(); ++id) support_.push_back(id);
  }

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<TokenId>& support() const { return support_; }
  const Table& table(int m) const { return tables_.at(static_cast<std::size_t>(m - 1)); }

  void add_count(std::vector<TokenId> context, TokenId token, std::uint64_t count) {
    auto m = context.size() + 1;
    if (m > tables_.size()) throw Error("context longer than model order");
    if (!in_support(token)) throw Error("token outside predictor support");
    auto& row = tables_[m - 1][std::move(context)];
    row.counts[token] += count;
    row.total += count;
  }

  /// Counts one sentence with BOS padding and an EOS terminal.
  void observe(std::span<const TokenId> sentence) {
    std::vector<TokenId> padded(static_cast<std::size_t>(order_ - 1), kBos);
    padded.insert(padded.end(), sentence.begin(), sentence.end());
    padded.push_back(kEos);
    for (std::size_t t = static_cast<std::size_t>(order_ - 1); t < padded.size(); ++t) {
      for (int m = 1; m <= order_; ++m) {
        std::vector<TokenId> ctx(padded.begin() + static_cast<std::ptrdiff_t>(t) - (m - 1),
                                 padded.begin() + static_cast<std::ptrdiff_t>(t));
        add_count(std::move(ctx), padded[t], 1);
      }
    }
  }

  /// Conditional distribution over support(), in support order.
  std::vector<double> distribution(std::span<const TokenId> context) const {
    std::vector<double> p(support_.size());
    const auto& uni = tables_[0].find({});
    const double total = uni == tables_[0].end() ? 0.0 : static_cast<double>(uni->second.total);
    const double denom = total + alpha_ * static_cast<double>(support_.size());
    for (std::size_t s = 0; s < support_.size(); ++s) {
      double c = 0.0;
      if (uni != tables_[0].end()) {
        auto it = uni->second.counts.find(support_[s]);
        if (it != uni->second.counts.end()) c = static_cast<double>(it->second);
      }
      p[s] = (c + alpha_) / denom;
    }

    auto padded = padded_context(context);
    for (int m = 2; m <= order_; ++m) {
      std::vector<TokenId> h(padded.end() - (m - 1), padded.end());
      auto it = tables_[static_cast<std::size_t>(m - 1)].find(h);
      if (it == tables_[static_cast<std::size_t>(m - 1)].end() || it->second.total == 0) continue;
      const auto& row = it->second;
      const double inv = 1.0 / static_cast<double>(row.total);
      for (std::size_t s = 0; s < support_.size(); ++s) p[s] *= (1.0 - beta_);
      for (auto [tok, c] : row.counts) p[support_index(tok)] += beta_ * static_cast<double>(c) * inv;
    }
    return p;
  }

  double probability(std::span<const TokenId> context, TokenId token) const {
    if (!in_support(token)) return 0.0;
    return distribution(context)[support_index(token)];
  }

  /// Argmax; ties go to the smallest token id.
  Prediction predict(std::span<const TokenId> context) const {
    auto p = distribution(context);
    std::size_t best = 0;
    for (std::size_t s = 1; s < p.size(); ++s) {
      if (p[s] > p[best]) best = s;
    }
    return {support_[best], p[best]};
  }

  std::string serialize() const {
    std::string out = "simtbp-ngram 1\n";
    char buf[64];
    out += "order " + std::to_string(order_) + "\n";
    std::snprintf(buf, sizeof buf, "alpha %.17g\n", alpha_);
    out += buf;
    std::snprintf(buf, sizeof buf, "beta %.17g\n", beta_);
    out += buf;
    out += "vocab";
    for (const auto& s : vocab_.surfaces()) out += " " + s;
    out += "\n";
    for (int m = 1; m <= order_; ++m) {
      for (const auto& [ctx, row] : table(m)) {
        std::string ctx_text = decode(ctx, vocab_);
        for (auto [tok, c] : row.counts) {
          out += "count " + std::to_string(c) + "\t" + ctx_text + "\t" + vocab_.surface(tok) + "\n";
        }
      }
    }
    return out;
  }

  static NgramModel deserialize(const std::vector<std::string>& lines) {
    auto bad = [](const std::string& why) { return Error("bad model file: " + why); };
    if (lines.size() < 5 || lines[0] != "simtbp-ngram 1") throw bad("header");
    auto value = [&](std::size_t n, const std::string& key) {
      if (lines[n].rfind(key + " ", 0) != 0) throw bad("expected " + key);
      return lines[n].substr(key.size() + 1);
    };
    int order = std::stoi(value(1, "order"));
    double alpha = std::stod(value(2, "alpha"));
    double beta = std::stod(value(3, "beta"));
    auto surfaces = split_tokens(value(4, "vocab"));
    Vocabulary vocab;
    for (std::size_t n = 0; n < surfaces.size(); ++n) {
      if (vocab.intern(surfaces[n]) != static_cast<TokenId>(n)) throw bad("vocabulary order");
    }
    NgramModel model(std::move(vocab), order, alpha, beta);
    for (std::size_t n = 5; n < lines.size(); ++n) {
      if (lines[n].empty()) continue;
      auto t1 = lines[n].find('\t');
      auto t2 = t1 == std::string::npos ? t1 : lines[n].find('\t', t1 + 1);
      if (lines[n].rfind("count ", 0) != 0 || t2 == std::string::npos) throw bad("count line");
      auto count = std::stoull(lines[n].substr(6, t1 - 6));
      std::vector<TokenId> ctx;
      for (const auto& s : split_tokens(lines[n].substr(t1 + 1, t2 - t1 - 1))) {
        auto id = model.vocab_.find(s);
        if (!id) throw bad("unknown token " + s);
        ctx.push_back(*id);
      }
      auto tok = model.vocab_.find(lines[n].substr(t2 + 1));
      if (!tok) throw bad("unknown token");
      model.add_count(std::move(ctx), *tok, count);
    }
    return model;
  }

  bool operator==(const NgramModel& o) const {
    return vocab_ == o.vocab_ && order_ == o.order_ && alpha_ == o.alpha_ && beta_ == o.beta_ &&
           tables_.size() == o.tables_.size() && std::equal(tables_.begin(), tables_.end(), o.tables_.begin(), same_table);
  }

 private:
  static bool same_table(const Table& a, const Table& b) {
    if (a.size() != b.size()) return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
      if (ia->first != ib->first || ia->second.counts != ib->second.counts || ia->second.total != ib->second.total) {
        return false;
      }
    }
    return true;
  }

  bool in_support(TokenId t) const {
    return t == kEos || (t >= kFirstRegular && static_cast<std::size_t>(t) < vocab_.size());
  }

  std::size_t support_index(TokenId t) const {
    return t == kEos ? 0 : static_cast<std::size_t>(t - kFirstRegular + 1);
  }

  std::vector<TokenId> padded_context(std::span<const TokenId> context) const {
    std::vector<TokenId> padded(static_cast<std::size_t>(order_ - 1), kBos);
    padded.insert(padded.end(), context.begin(), context.end());
    return padded;
  }

  Vocabulary vocab_;
  int order_;
  double alpha_;
  double beta_;
  std::vector<Table> tables_;
  std::vector<TokenId> support_;
};

inline NgramModel train(const std::vector<Sentence>& corpus, const Vocabulary& vocab, int order,
                        double alpha = 0.1, double beta = 0.9) {
  if (order < 1) throw Error("invalid order");
  if (corpus.empty()) throw Error("empty corpus");
  NgramModel model(vocab, order, alpha, beta);
  for (const auto& s : corpus) model.observe(s);
  return model;
}

struct LmStats {
  std::size_t predictions = 0;
  std::size_t correct = 0;
  double log_prob = 0.0;  // natural log, summed

  double accuracy() const { return predictions ? static_cast<double>(correct) / static_cast<double>(predictions) : 0.0; }
  double perplexity() const {
    return predictions ? std::exp(-log_prob / static_cast<double>(predictions)) : 0.0;
  }
};

/// Next-token accuracy and perplexity over every position of each sentence plus its EOS.
inline LmStats evaluate(const NgramModel& model, std::span<const Sentence> corpus) {
  LmStats st;
  for (const auto& s : corpus) {
    for (std::size_t t = 0; t <= s.size(); ++t) {
      auto ctx = std::span<const TokenId>(s).first(t);
      TokenId truth = t < s.size() ? s[t] : kEos;
      auto best = model.predict(ctx);
      st.correct += best.token == truth;
      st.log_prob += std::log(model.probability(ctx, truth));
      ++st.predictions;
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Simulation-only predictors that see the true source.

/// Always predicts the true next token with probability 1.
class OraclePredictor {
 public:
  OraclePredictor(Sentence source, std::size_t vocab_size) : source_(std::move(source)), vocab_size_(vocab_size) {}

  Prediction predict(std::span<const TokenId> context) const {
    if (context.size() >= source_.size()) return {kEos, 1.0};
    return {source_[context.size()], 1.0};
  }
  std::size_t vocab_size() const { return vocab_size_; }

 private:
  Sentence source_;
  std::size_t vocab_size_;
};

/// Always predicts some token other than the true next one, with probability 1.
class AlwaysWrongPredictor {
 public:
  AlwaysWrongPredictor(Sentence source, std::size_t vocab_size)
      : oracle_(std::move(source), vocab_size), vocab_size_(vocab_size) {}

  Prediction predict(std::span<const TokenId> context) const {
    auto truth = oracle_.predict(context).token;
    for (TokenId c : {kFirstRegular, static_cast<TokenId>(kFirstRegular + 1), kEos}) {
      if (c != truth && static_cast<std::size_t>(c) < vocab_size_) return {c, 1.0};
    }
    throw Error("vocabulary too small for a wrong prediction");
  }
  std::size_t vocab_size() const { return vocab_size_; }

 private:
  OraclePredictor oracle_;
  std::size_t vocab_size_;
};

/// Runtime-selected predictor bound to one source sentence.
class BranchPredictor {
 public:
  using Impl = std::variant<std::shared_ptr<const NgramModel>, OraclePredictor, AlwaysWrongPredictor>;

  explicit BranchPredictor(Impl impl) : impl_(std::move(impl)) {}

  Prediction predict(std::span<const TokenId> context) const {
    return std::visit(
        [&](const auto& p) -> Prediction {
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>, std::shared_ptr<const NgramModel>>) {
            return p->predict(context);
          } else {
            return p.predict(context);
          }
        },
        impl_);
  }

  std::size_t vocab_size() const {
    return std::visit(
        [](const auto& p) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>, std::shared_ptr<const NgramModel>>) {
            return p->vocab_size();
          } else {
            return p.vocab_size();
          }
        },
        impl_);
  }

 private:
  Impl impl_;
};

enum class PredictorKind { kNgram, kOracle, kAlwaysWrong };

/// Recipe for a per-sentence BranchPredictor.
struct PredictorSpec {
  PredictorKind kind = PredictorKind::kOracle;
  std::shared_ptr<const NgramModel> model;  // kNgram only
  std::size_t vocab_size = 0;               // oracle kinds
  std::string name;

  BranchPredictor bind(const Sentence& source) const {
    switch (kind) {
      case PredictorKind::kNgram:
        if (!model) throw Error("ngram predictor without model");
        return BranchPredictor(model);
      case PredictorKind::kOracle:
        return BranchPredictor(OraclePredictor(source, vocab_size));
      case PredictorKind::kAlwaysWrong:
        return BranchPredictor(AlwaysWrongPredictor(source, vocab_size));
    }
    throw Error("unknown predictor kind");
  }
};

}  // namespace simtbp
