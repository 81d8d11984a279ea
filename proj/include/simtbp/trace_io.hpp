#pragma once

// JSON Lines trace files. The first line is {"run_config": {...}}, then one
// event object per line. Tokens are written as surface strings.

#include <json.hpp>
#include <sstream>
#include <string>

#include "simtbp/core.hpp"

namespace simtbp {

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"policy", c.policy}, {"param", c.param},   {"tau", c.tau},   {"predictor", c.predictor},
          {"corpus", c.corpus}, {"seed", c.seed},     {"mode", c.mode}, {"sentence", c.sentence}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.policy = j.at("policy").get<std::string>();
  c.param = j.at("param").get<double>();
  c.tau = j.at("tau").get<double>();
  c.predictor = j.at("predictor").get<std::string>();
  c.corpus = j.at("corpus").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.mode = j.at("mode").get<std::string>();
  c.sentence = j.at("sentence").get<int>();
  return c;
}

inline std::string serialize_trace(const EventTrace& trace, const Vocabulary& source,
                                   const Vocabulary& target) {
  std::string out = nlohmann::json{{"run_config", to_json(trace.config)}}.dump();
  out += '\n';
  for (const auto& e : trace.events) {
    nlohmann::json j;
    j["ev"] = std::string(to_string(e.kind));
    switch (e.kind) {
      case EventKind::kRead:
        j["i"] = e.i;
        j["tok"] = source.surface(e.tok);
        break;
      case EventKind::kPredict:
        j["i"] = e.i;
        j["pred"] = source.surface(e.pred);
        j["p"] = e.p;
        break;
      case EventKind::kSpeculate:
      case EventKind::kWrite:
        j["i"] = e.i;
        j["j"] = e.j;
        j["tok"] = target.surface(e.tok);
        break;
      case EventKind::kCommit:
        j["j"] = e.j;
        break;
      case EventKind::kWithdraw:
        j["j"] = e.j;
        j["old"] = target.surface(e.old_tok);
        j["new"] = target.surface(e.new_tok);
        break;
      case EventKind::kEnd:
        break;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

/// Parses a trace file, interning unseen surfaces into the given vocabularies.
inline EventTrace parse_trace(const std::string& text, Vocabulary& source, Vocabulary& target) {
  EventTrace trace;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error("trace line " + std::to_string(lineno) + ": " + ex.what());
    }
    try {
      if (header) {
        trace.config = run_config_from_json(j.at("run_config"));
        header = false;
        continue;
      }
      auto kind = parse_event_kind(j.at("ev").get<std::string>());
      if (!kind) throw Error("trace line " + std::to_string(lineno) + ": unknown event");
      Event e;
      e.kind = *kind;
      switch (e.kind) {
        case EventKind::kRead:
          e.i = j.at("i").get<int>();
          e.tok = source.intern(j.at("tok").get<std::string>());
          break;
        case EventKind::kPredict:
          e.i = j.at("i").get<int>();
          e.pred = source.intern(j.at("pred").get<std::string>());
          e.p = j.at("p").get<double>();
          break;
        case EventKind::kSpeculate:
        case EventKind::kWrite:
          e.i = j.at("i").get<int>();
          e.j = j.at("j").get<int>();
          e.tok = target.intern(j.at("tok").get<std::string>());
          break;
        case EventKind::kCommit:
          e.j = j.at("j").get<int>();
          break;
        case EventKind::kWithdraw:
          e.j = j.at("j").get<int>();
          e.old_tok = target.intern(j.at("old").get<std::string>());
          e.new_tok = target.intern(j.at("new").get<std::string>());
          break;
        case EventKind::kEnd:
          break;
      }
      trace.events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error("trace line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (header) throw Error("trace has no header");
  return trace;
}

}  // namespace simtbp
