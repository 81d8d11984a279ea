#pragma once

// Speculative simultaneous translation loop and its non-speculative baseline.
//
// After each real read the translator decodes until it asks for another read.
// The predictor then guesses the next source token and, if its confidence
// clears the threshold, the translator takes one step on the guessed prefix.
// When the real token arrives the speculative step is committed on a hit and
// withdrawn and recomputed on a miss. Since the translator is a pure function
// of its arguments, a hit produces exactly what the non-speculative loop would
// have produced, so the final output never changes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <concepts>
#include <exception>
#include <future>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "simtbp/core.hpp"
#include "simtbp/predictor.hpp"
#include "simtbp/simt_model.hpp"

namespace simtbp {

template <typename M>
concept Translator = requires(const M& m, SourceView src, std::span<const TokenId> tgt) {
  { m.step(src, tgt) } -> std::same_as<TokenId>;
  { m.source_vocab().size() } -> std::convertible_to<std::size_t>;
};

enum class EngineMode { kSequential, kConcurrent };

struct EngineConfig {
  double tau = 0.0;  // speculate only when the prediction probability is >= tau
  EngineMode mode = EngineMode::kSequential;
  bool record_trace = true;
  std::optional<std::size_t> max_output;  // defaults to 2 * I + 8
};

struct RunResult {
  Sentence output;
  EventTrace trace;
  SnapshotMatrix snapshots;
  std::size_t withdrawals = 0;
  std::size_t speculations = 0;
  std::size_t hits = 0;
  double wall_seconds = 0.0;  // measured only; never part of the trace
};

namespace detail {

inline std::size_t output_cap(const EngineConfig& cfg, std::size_t source_len) {
  return cfg.max_output.value_or(2 * source_len + 8);
}

// Shared bookkeeping for both loops.
struct RunState {
  Sentence y;
  std::vector<Event> events;
  std::vector<Sentence> rows;
  std::size_t cap = 0;

  int next_j() const { return static_cast<int>(y.size()) + 1; }

  void append(TokenId tok) {
    y.push_back(tok);
    if (y.size() > cap) throw Error("runaway decode");
  }

  /// Decodes until the translator asks for a read (PHI) or finishes (EOS).
  template <Translator M>
  TokenId decode(const M& model, SourceView view, int basis) {
    while (true) {
      TokenId tok = model.step(view, y);
      if (!continue_with(tok, view, basis)) return tok;
    }
  }

  /// Records the outcome of one translator step; false once the step ended decoding.
  bool continue_with(TokenId tok, SourceView view, int basis) {
    if (tok == kPhi) {
      if (view.complete) throw Error("read after end of source");
      events.push_back(Event::write(next_j(), kPhi, basis));
      return false;
    }
    if (tok == kEos) {
      if (!view.complete) throw Error("end of target before end of source");
      return false;
    }
    events.push_back(Event::write(next_j(), tok, basis));
    append(tok);
    return true;
  }

  void begin_read(int i, TokenId tok) {
    if (i > 1) rows.push_back(y);
    events.push_back(Event::read(i, tok));
  }

  RunResult finish(bool keep_trace) {
    events.push_back(Event::end());
    rows.push_back(y);
    RunResult r;
    r.output = y;
    r.snapshots.rows = std::move(rows);
    if (keep_trace) r.trace.events = std::move(events);
    return r;
  }
};

inline SourceView real_view(const Sentence& source, std::size_t read) {
  return {std::span<const TokenId>(source).first(read), false};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Non-speculative loop: read, decode until READ, repeat; then the write-only tail.
template <Translator M>
RunResult run_baseline(const M& model, const Sentence& source, const EngineConfig& config = {}) {
  if (source.empty()) throw Error("empty source");
  const auto t0 = std::chrono::steady_clock::now();
  const int source_len = static_cast<int>(source.size());
  detail::RunState st;
  st.cap = detail::output_cap(config, source.size());

  for (int i = 1; i <= source_len; ++i) {
    st.begin_read(i, source[static_cast<std::size_t>(i - 1)]);
    st.decode(model, detail::real_view(source, static_cast<std::size_t>(i)), i);
  }
  st.events.push_back(Event::read(source_len + 1, kEos));
  st.decode(model, SourceView{source, true}, source_len);

  auto r = st.finish(config.record_trace);
  r.wall_seconds = detail::seconds_since(t0);
  return r;
}

namespace detail {

template <Translator M, BranchPredictorLike P>
class SpeculativeRun {
 public:
  SpeculativeRun(const M& model, const P& predictor, const Sentence& source, const EngineConfig& config)
      : model_(model), predictor_(predictor), source_(source), config_(config) {
    st_.cap = output_cap(config, source.size());
    scratch_.reserve(source.size() + 1);
  }

  RunResult run() {
    const int source_len = static_cast<int>(source_.size());
    speculate(0, predict(0));
    for (int i = 1; i <= source_len + 1; ++i) {
      const bool at_end = i == source_len + 1;
      const TokenId real = at_end ? kEos : source_[static_cast<std::size_t>(i - 1)];
      if (at_end) {
        st_.events.push_back(Event::read(i, kEos));
      } else {
        st_.begin_read(i, real);
      }
      const auto read = static_cast<std::size_t>(at_end ? source_len : i);
      const SourceView view{std::span<const TokenId>(source_).first(read), at_end};

      // The next prediction depends only on the real prefix, so it may run
      // alongside the resolution of the pending speculation.
      std::future<Prediction> next;
      if (!at_end && config_.mode == EngineMode::kConcurrent) {
        next = std::async(std::launch::async, [this, read] { return predict(read); });
      }

      resolve(real, view, static_cast<int>(read));

      if (!at_end) {
        speculate(static_cast<int>(read), next.valid() ? next.get() : predict(read));
      }
    }
    RunResult r = st_.finish(config_.record_trace);
    r.withdrawals = withdrawals_;
    r.speculations = speculations_;
    r.hits = hits_;
    return r;
  }

 private:
  struct Pending {
    int j;
    TokenId tok;
    TokenId predicted;
  };

  Prediction predict(std::size_t read) const {
    auto pred = predictor_.predict(std::span<const TokenId>(source_).first(read));
    if (pred.token != kEos && (pred.token < kFirstRegular || static_cast<std::size_t>(pred.token) >= predictor_.vocab_size())) {
      throw Error("predictor/vocabulary mismatch");
    }
    return pred;
  }

  void speculate(int read, Prediction pred) {
    st_.events.push_back(Event::predict(read, pred.token, pred.probability));
    if (pred.probability < config_.tau) return;
    scratch_.assign(source_.begin(), source_.begin() + read);
    const bool predicts_end = pred.token == kEos;
    if (!predicts_end) scratch_.push_back(pred.token);
    const TokenId tok = model_.step(SourceView{scratch_, predicts_end}, st_.y);
    pending_ = Pending{st_.next_j(), tok, pred.token};
    ++speculations_;
    st_.events.push_back(Event::speculate(pending_->j, tok, read));
    if (emits_output(tok)) st_.append(tok);
  }

  void resolve(TokenId real, SourceView view, int basis) {
    if (!pending_) {
      st_.decode(model_, view, basis);
      return;
    }
    const Pending p = *pending_;
    pending_.reset();
    TokenId first;
    if (p.predicted == real) {
      st_.events.push_back(Event::commit(p.j));
      ++hits_;
      first = p.tok;
    } else {
      if (emits_output(p.tok)) st_.y.pop_back();
      first = model_.step(view, st_.y);
      st_.events.push_back(Event::withdraw(p.j, p.tok, first));
      ++withdrawals_;
      if (emits_output(first)) st_.append(first);
    }
    if (first == kPhi) {
      if (view.complete) throw Error("read after end of source");
      return;
    }
    if (first == kEos) {
      if (!view.complete) throw Error("end of target before end of source");
      return;
    }
    st_.decode(model_, view, basis);
  }

  const M& model_;
  const P& predictor_;
  const Sentence& source_;
  const EngineConfig& config_;
  RunState st_;
  std::optional<Pending> pending_;
  Sentence scratch_;
  std::size_t withdrawals_ = 0;
  std::size_t speculations_ = 0;
  std::size_t hits_ = 0;
};

}  // namespace detail

/// The branch-prediction loop. Final output always equals run_baseline's.
template <Translator M, BranchPredictorLike P>
RunResult run_speculative(const M& model, const P& predictor, const Sentence& source,
                          const EngineConfig& config = {}) {
  if (source.empty()) throw Error("empty source");
  if (!(config.tau >= 0.0 && config.tau <= 1.0)) throw Error("tau must be in [0, 1]");
  if (predictor.vocab_size() != model.source_vocab().size()) throw Error("predictor/vocabulary mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  auto r = detail::SpeculativeRun<M, P>(model, predictor, source, config).run();
  r.wall_seconds = detail::seconds_since(t0);
  return r;
}

/// Runs `job(index)` for every index on `threads` workers. Errors are rethrown
/// for the lowest failing index, prefixed with it.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < count; n = next++) {
      try {
        job(n);
      } catch (...) {
        errors[n] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t n = 0; n < count; ++n) {
    if (!errors[n]) continue;
    try {
      std::rethrow_exception(errors[n]);
    } catch (const std::exception& ex) {
      throw Error("sentence " + std::to_string(n) + ": " + ex.what());
    }
  }
}

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Speculative runs over a corpus; `bind(source)` yields the predictor for one sentence.
template <Translator M, typename Bind>
std::vector<RunResult> run_corpus(const M& model, Bind&& bind, const std::vector<Sentence>& corpus,
                                  const EngineConfig& config, std::size_t threads = default_threads()) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<RunResult> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t n) {
    auto predictor = bind(corpus[n]);
    out[n] = run_speculative(model, predictor, corpus[n], config);
  });
  return out;
}

template <Translator M>
std::vector<RunResult> run_corpus_baseline(const M& model, const std::vector<Sentence>& corpus,
                                           const EngineConfig& config = {},
                                           std::size_t threads = default_threads()) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<RunResult> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t n) { out[n] = run_baseline(model, corpus[n], config); });
  return out;
}

}  // namespace simtbp
