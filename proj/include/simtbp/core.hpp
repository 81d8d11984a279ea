#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "simtbp/error.hpp"

namespace simtbp {

using TokenId = std::int32_t;

// Reserved ids. These are fixed for every vocabulary.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPhi = 2;  // the READ decision in the output vocabulary
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstRegular = 4;

inline constexpr std::string_view kBosSurface = "<s>";
inline constexpr std::string_view kEosSurface = "</s>";
inline constexpr std::string_view kPhiSurface = "<phi>";
inline constexpr std::string_view kUnkSurface = "<unk>";

inline bool is_reserved(TokenId id) { return id >= 0 && id < kFirstRegular; }

/// Token sequence without BOS/EOS markers.
using Sentence = std::vector<TokenId>;

class Vocabulary {
 public:
  Vocabulary() {
    for (auto s : {kBosSurface, kEosSurface, kPhiSurface, kUnkSurface}) {
      push(std::string(s));
    }
  }

  /// Returns the id of `surface`, adding it if new.
  TokenId intern(std::string_view surface) {
    auto it = index_.find(std::string(surface));
    if (it != index_.end()) return it->second;
    return push(std::string(surface));
  }

  std::optional<TokenId> find(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId lookup(std::string_view surface) const { return find(surface).value_or(kUnk); }

  const std::string& surface(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size()) {
      throw Error("token id out of range: " + std::to_string(id));
    }
    return surfaces_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return surfaces_.size(); }
  const std::vector<std::string>& surfaces() const { return surfaces_; }

  bool operator==(const Vocabulary& other) const { return surfaces_ == other.surfaces_; }

 private:
  TokenId push(std::string s) {
    auto id = static_cast<TokenId>(surfaces_.size());
    index_.emplace(s, id);
    surfaces_.push_back(std::move(s));
    return id;
  }

  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
};

inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    if (end > pos) out.emplace_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

/// Reserved ids first, then tokens in first-occurrence order.
inline Vocabulary build_vocabulary(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  Vocabulary vocab;
  for (const auto& line : corpus) {
    for (const auto& tok : split_tokens(line)) vocab.intern(tok);
  }
  return vocab;
}

inline Sentence encode(std::string_view line, const Vocabulary& vocab) {
  Sentence out;
  for (const auto& tok : split_tokens(line)) out.push_back(vocab.lookup(tok));
  return out;
}

/// Like encode, but every token must already be known.
inline Sentence encode_strict(std::string_view line, const Vocabulary& vocab) {
  Sentence out;
  for (const auto& tok : split_tokens(line)) {
    auto id = vocab.find(tok);
    if (!id || is_reserved(*id)) throw Error("unknown source token: " + tok);
    out.push_back(*id);
  }
  return out;
}

inline std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if (n) out += ' ';
    out += vocab.surface(ids[n]);
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// Snapshot matrix: row i is the visible target prefix after read i.

struct SnapshotMatrix {
  std::vector<Sentence> rows;

  std::size_t source_length() const { return rows.size(); }
  std::size_t target_length() const { return rows.empty() ? 0 : rows.back().size(); }
  const Sentence& final_row() const { return rows.back(); }

  bool operator==(const SnapshotMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Event trace

enum class EventKind { kRead, kPredict, kSpeculate, kCommit, kWithdraw, kWrite, kEnd };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kRead: return "READ";
    case EventKind::kPredict: return "PREDICT";
    case EventKind::kSpeculate: return "SPECULATE";
    case EventKind::kCommit: return "COMMIT";
    case EventKind::kWithdraw: return "WITHDRAW";
    case EventKind::kWrite: return "WRITE";
    case EventKind::kEnd: return "END";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::kRead, EventKind::kPredict, EventKind::kSpeculate, EventKind::kCommit,
                 EventKind::kWithdraw, EventKind::kWrite, EventKind::kEnd}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

// Field use per kind:
//   READ(i, tok)             i = 1-based read index; tok is EOS for the end-of-source read
//   PREDICT(i, pred, p)      i = reads completed when the prediction was made
//   SPECULATE(j, tok, i)     i = basis (reads completed); tok may be PHI or EOS
//   COMMIT(j)
//   WITHDRAW(j, old, new)    new may be PHI (slot emptied)
//   WRITE(j, tok, i)         tok == PHI records a READ decision
//   END
struct Event {
  EventKind kind = EventKind::kEnd;
  int i = 0;
  int j = 0;
  TokenId tok = kUnk;
  TokenId pred = kUnk;
  double p = 0.0;
  TokenId old_tok = kUnk;
  TokenId new_tok = kUnk;

  static Event read(int i, TokenId tok) { return {EventKind::kRead, i, 0, tok}; }
  static Event predict(int i, TokenId pred, double p) {
    Event e{EventKind::kPredict, i};
    e.pred = pred;
    e.p = p;
    return e;
  }
  static Event speculate(int j, TokenId tok, int basis) { return {EventKind::kSpeculate, basis, j, tok}; }
  static Event commit(int j) { return {EventKind::kCommit, 0, j}; }
  static Event withdraw(int j, TokenId old_tok, TokenId new_tok) {
    Event e{EventKind::kWithdraw, 0, j};
    e.old_tok = old_tok;
    e.new_tok = new_tok;
    return e;
  }
  static Event write(int j, TokenId tok, int basis) { return {EventKind::kWrite, basis, j, tok}; }
  static Event end() { return {}; }

  bool operator==(const Event&) const = default;
};

struct RunConfig {
  std::string policy;     // "wait-k" | "adaptive"
  double param = 0.0;     // k or L
  double tau = 0.0;
  std::string predictor;  // "none" for baseline runs
  std::string corpus;
  std::uint64_t seed = 0;
  std::string mode;       // "baseline" | "speculative"
  int sentence = 0;

  bool operator==(const RunConfig&) const = default;
};

struct EventTrace {
  RunConfig config;
  std::vector<Event> events;

  std::size_t count(EventKind k) const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.kind == k;
    return n;
  }

  bool operator==(const EventTrace&) const = default;
};

inline bool emits_output(TokenId t) { return t != kPhi && t != kEos; }

/// Replays a trace into its snapshot matrix. Events after READ(i) and before
/// READ(i+1) belong to row i; events after the end-of-source read belong to
/// the last row.
inline SnapshotMatrix snapshot_from_trace(const EventTrace& trace) {
  auto fail = [] { throw Error("inconsistent trace"); };
  SnapshotMatrix out;
  Sentence visible;
  struct Pending {
    int j;
    TokenId tok;
  };
  std::optional<Pending> pending;
  int last_read = 0;
  bool source_done = false;
  bool ended = false;

  for (const auto& e : trace.events) {
    if (ended) fail();
    switch (e.kind) {
      case EventKind::kRead:
        if (e.i != last_read + 1 || source_done) fail();
        if (e.tok == kEos) {
          if (last_read == 0) fail();
          source_done = true;
        } else if (last_read > 0) {
          out.rows.push_back(visible);
        }
        last_read = e.i;
        break;
      case EventKind::kPredict:
        break;
      case EventKind::kSpeculate:
        if (pending || e.j != static_cast<int>(visible.size()) + 1) fail();
        pending = Pending{e.j, e.tok};
        if (emits_output(e.tok)) visible.push_back(e.tok);
        break;
      case EventKind::kCommit:
        if (!pending || pending->j != e.j) fail();
        pending.reset();
        break;
      case EventKind::kWithdraw:
        if (!pending || pending->j != e.j || pending->tok != e.old_tok) fail();
        if (emits_output(e.old_tok)) visible.pop_back();
        if (emits_output(e.new_tok)) visible.push_back(e.new_tok);
        pending.reset();
        break;
      case EventKind::kWrite:
        if (pending || e.j != static_cast<int>(visible.size()) + 1) fail();
        if (emits_output(e.tok)) visible.push_back(e.tok);
        break;
      case EventKind::kEnd:
        if (pending || last_read == 0) fail();
        ended = true;
        break;
    }
  }
  if (!ended) fail();
  out.rows.push_back(visible);
  return out;
}

}  // namespace simtbp
