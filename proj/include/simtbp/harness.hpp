#pragma once

// Experiment harness: synthetic Markov corpora with a matching lexicon,
// baseline/speculative sweeps, CSV output and plot-ready tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <tuple>
#include <string>
#include <vector>

#include "simtbp/core.hpp"
#include "simtbp/engine.hpp"
#include "simtbp/metrics.hpp"
#include "simtbp/predictor.hpp"
#include "simtbp/rng.hpp"
#include "simtbp/simt_model.hpp"
#include "simtbp/trace_io.hpp"

namespace simtbp {

struct MarkovSourceSpec {
  int vocab_size = 20;
  double kappa = 0.1;  // Dirichlet concentration of transition rows; lower is more predictable
  double rho = 0.3;    // fraction of source tokens with successor-dependent translations
  int min_len = 5;
  int max_len = 15;
  std::uint64_t seed = 7;

  void validate() const {
    if (vocab_size < 4) throw Error("vocab_size must be >= 4");
    if (!(kappa > 0.0)) throw Error("kappa must be > 0");
    if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rho must be in [0, 1]");
    if (min_len < 1 || max_len < min_len) throw Error("invalid sentence length range");
  }
};

struct GeneratedCorpus {
  std::shared_ptr<const Lexicon> lexicon;
  std::vector<Sentence> sources;
  std::vector<Sentence> references;

  std::string source_text() const { return lines(sources, lexicon->source_vocab()); }
  std::string reference_text() const { return lines(references, lexicon->target_vocab()); }

  static std::string lines(const std::vector<Sentence>& s, const Vocabulary& v) {
    std::string out;
    for (const auto& x : s) out += decode(x, v) + "\n";
    return out;
  }
};

namespace detail {

inline std::string source_surface(int n) { return "s" + std::to_string(n); }

/// First-order chain: row 0 is the start distribution, row n+1 follows token n.
inline std::vector<std::vector<double>> dirichlet_rows(int vocab_size, double kappa, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(vocab_size) + 1);
  for (auto& row : rows) {
    std::vector<double> logs(static_cast<std::size_t>(vocab_size));
    for (auto& l : logs) l = rng.log_gamma_variate(kappa);
    const double top = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    row.resize(logs.size());
    for (std::size_t n = 0; n < logs.size(); ++n) sum += row[n] = std::exp(logs[n] - top);
    double acc = 0.0;
    for (auto& p : row) p = acc += p / sum;  // cumulative
    row.back() = 1.0;
  }
  return rows;
}

inline int sample(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform();
  return static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

inline std::vector<Sentence> markov_sentences(const MarkovSourceSpec& spec, const Vocabulary& vocab,
                                              std::size_t count, std::uint64_t transition_seed,
                                              std::uint64_t corpus_seed) {
  const auto rows = dirichlet_rows(spec.vocab_size, spec.kappa, transition_seed);
  std::vector<TokenId> ids(static_cast<std::size_t>(spec.vocab_size));
  for (int n = 0; n < spec.vocab_size; ++n) ids[static_cast<std::size_t>(n)] = *vocab.find(source_surface(n));
  Rng rng(corpus_seed);
  std::vector<Sentence> out(count);
  for (auto& s : out) {
    const auto len = rng.between(spec.min_len, spec.max_len);
    int prev = -1;
    for (std::int64_t t = 0; t < len; ++t) {
      prev = sample(rows[static_cast<std::size_t>(prev + 1)], rng);
      s.push_back(ids[static_cast<std::size_t>(prev)]);
    }
  }
  return out;
}

inline Lexicon markov_lexicon(const MarkovSourceSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const int v = spec.vocab_size;
  Lexicon lex;
  for (int n = 0; n < v; ++n) lex.add_default(source_surface(n), "t" + std::to_string(n));

  std::vector<int> order(static_cast<std::size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t n = order.size(); n > 1; --n) std::swap(order[n - 1], order[rng.below(n)]);
  const auto ambiguous = static_cast<std::size_t>(std::lround(spec.rho * v));
  std::vector<int> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ambiguous));
  std::sort(chosen.begin(), chosen.end());

  // An ambiguous token takes its alternate sense before roughly half of the
  // possible successors.
  for (int a : chosen) {
    std::vector<int> conditioners;
    for (int c = 0; c < v; ++c) {
      if (rng.below(2) == 0) conditioners.push_back(c);
    }
    if (conditioners.empty()) conditioners.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(v))));
    for (int c : conditioners) {
      lex.add_conditional(source_surface(a), source_surface(c), "t" + std::to_string(a) + "x");
    }
  }
  lex.validate();
  return lex;
}

}  // namespace detail

/// Sources, lexicon and full-sentence references, all determined by spec.seed.
inline GeneratedCorpus gen_corpus(const MarkovSourceSpec& spec, std::size_t n_sentences) {
  spec.validate();
  if (n_sentences == 0) throw Error("empty corpus");
  GeneratedCorpus out;
  auto lex = std::make_shared<Lexicon>(detail::markov_lexicon(spec, sub_seed(spec.seed, "lexicon")));
  out.sources = detail::markov_sentences(spec, lex->source_vocab(), n_sentences,
                                         sub_seed(spec.seed, "transition"), sub_seed(spec.seed, "corpus"));
  for (const auto& s : out.sources) out.references.push_back(full_sentence_translate(*lex, s));
  out.lexicon = std::move(lex);
  return out;
}

/// Same vocabulary and lengths, independently seeded transition matrix.
inline std::vector<Sentence> gen_out_of_domain(const MarkovSourceSpec& spec, const Vocabulary& vocab,
                                               std::size_t n_sentences) {
  spec.validate();
  return detail::markov_sentences(spec, vocab, n_sentences, sub_seed(spec.seed, "transition-ood"),
                                  sub_seed(spec.seed, "corpus-ood"));
}

inline void write_corpus_files(const GeneratedCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text((dir / "source.txt").string(), c.source_text());
  write_text((dir / "lexicon.tsv").string(), c.lexicon->to_tsv());
  write_text((dir / "reference.txt").string(), c.reference_text());
}

// ---------------------------------------------------------------------------
// Experiments

struct Split {
  std::vector<Sentence> train;
  std::vector<Sentence> test;
  std::size_t test_offset = 0;  // corpus index of test[0]
};

/// First 90% of sentences train, the rest test.
inline Split split_corpus(const std::vector<Sentence>& corpus) {
  Split s;
  s.test_offset = corpus.size() * 9 / 10;
  if (s.test_offset == corpus.size()) s.test_offset = corpus.size() - 1;
  s.train.assign(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(s.test_offset));
  s.test.assign(corpus.begin() + static_cast<std::ptrdiff_t>(s.test_offset), corpus.end());
  return s;
}

struct ExperimentConfig {
  // Data: either files or a generator spec.
  std::string corpus_path;
  std::string lexicon_path;
  std::string reference_path;
  std::string ood_corpus_path;
  MarkovSourceSpec gen;
  std::size_t n_sentences = 1000;
  std::string corpus_id = "markov";

  // Grid.
  std::vector<int> k_values;
  std::vector<double> l_values;
  std::vector<double> taus{0.0};
  std::vector<std::string> predictors{"in-domain"};  // in-domain | out-of-domain | oracle | always-wrong

  int order = 2;
  double alpha = 0.1;
  double beta = 0.9;

  std::string out_dir;
  bool write_traces = false;
  std::size_t threads = default_threads();
  EngineMode mode = EngineMode::kSequential;
};

struct RunRow {
  std::string run_id;
  std::string policy;
  double param = 0;
  double tau = 0;
  std::string predictor;
  std::size_t I = 0, J = 0, W = 0, S = 0, H = 0;
  double al = 0, awr = 0, bleu = 0;
};

struct SummaryRow {
  std::string policy;
  double param = 0;
  double tau = 0;
  std::string predictor;
  std::size_t sentences = 0;
  double al_baseline = 0, al_speculative = 0, al_diff = 0, awr = 0;
  double bleu_baseline = 0, bleu_speculative = 0;
  double accuracy = 0;  // predictor next-token accuracy on the test split
  std::size_t S = 0, H = 0, W = 0, J = 0;
  bool ok = true;
  std::string error;

  std::vector<double> sentence_al_diff;  // in memory only
};

struct ExperimentResult {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;
  std::vector<std::string> failures;  // inline invariant violations and grid-point errors

  bool ok() const { return failures.empty(); }
};

/// Loaded or generated data plus trained predictors.
struct ExperimentData {
  std::shared_ptr<const Lexicon> lexicon;
  std::vector<Sentence> corpus;
  std::vector<Sentence> references;
  Split split;
  std::vector<Sentence> ood_train;
};

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  if (!cfg.corpus_path.empty()) {
    if (cfg.lexicon_path.empty()) throw Error("corpus given without lexicon");
    auto lex = std::make_shared<Lexicon>(Lexicon::from_tsv(read_lines(cfg.lexicon_path)));
    for (const auto& line : read_lines(cfg.corpus_path)) {
      if (!split_tokens(line).empty()) d.corpus.push_back(encode_strict(line, lex->source_vocab()));
    }
    if (d.corpus.empty()) throw Error("empty corpus");
    if (!cfg.reference_path.empty()) {
      for (const auto& line : read_lines(cfg.reference_path)) {
        if (!split_tokens(line).empty()) d.references.push_back(encode(line, lex->target_vocab()));
      }
      if (d.references.size() != d.corpus.size()) throw Error("reference count does not match corpus");
    } else {
      for (const auto& s : d.corpus) d.references.push_back(full_sentence_translate(*lex, s));
    }
    if (!cfg.ood_corpus_path.empty()) {
      for (const auto& line : read_lines(cfg.ood_corpus_path)) {
        if (!split_tokens(line).empty()) d.ood_train.push_back(encode_strict(line, lex->source_vocab()));
      }
    }
    d.lexicon = std::move(lex);
  } else {
    auto g = gen_corpus(cfg.gen, cfg.n_sentences);
    d.lexicon = g.lexicon;
    d.corpus = std::move(g.sources);
    d.references = std::move(g.references);
    d.ood_train = gen_out_of_domain(cfg.gen, d.lexicon->source_vocab(), cfg.n_sentences * 9 / 10);
  }
  d.split = split_corpus(d.corpus);
  return d;
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_escape_free(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

}  // namespace detail

inline std::string run_id(const std::string& policy, double param, const std::string& rest, std::size_t sentence) {
  return policy + "_" + detail::fmt_num(param) + "_" + rest + "_s" + std::to_string(sentence);
}

inline PredictorSpec make_predictor(const std::string& name, const ExperimentConfig& cfg, const ExperimentData& d) {
  PredictorSpec p;
  p.name = name;
  p.vocab_size = d.lexicon->source_vocab().size();
  if (name == "in-domain") {
    p.kind = PredictorKind::kNgram;
    p.model = std::make_shared<NgramModel>(train(d.split.train, d.lexicon->source_vocab(), cfg.order, cfg.alpha, cfg.beta));
  } else if (name == "out-of-domain") {
    if (d.ood_train.empty()) throw Error("out-of-domain predictor needs an out-of-domain corpus");
    p.kind = PredictorKind::kNgram;
    p.model = std::make_shared<NgramModel>(train(d.ood_train, d.lexicon->source_vocab(), cfg.order, cfg.alpha, cfg.beta));
  } else if (name == "oracle") {
    p.kind = PredictorKind::kOracle;
  } else if (name == "always-wrong") {
    p.kind = PredictorKind::kAlwaysWrong;
  } else {
    throw Error("unknown predictor: " + name);
  }
  return p;
}

inline double predictor_accuracy(const PredictorSpec& p, const std::vector<Sentence>& test) {
  switch (p.kind) {
    case PredictorKind::kNgram: return evaluate(*p.model, test).accuracy();
    case PredictorKind::kOracle: return 1.0;
    case PredictorKind::kAlwaysWrong: return 0.0;
  }
  return 0.0;
}

/// Checks that must hold for every speculative run; returns a description of the first violation.
inline std::string check_run(const RunResult& baseline, const RunResult& spec) {
  if (spec.output != baseline.output) return "final output differs from baseline";
  if (!spec.trace.events.empty()) {
    if (spec.trace.count(EventKind::kWithdraw) != spec.withdrawals) return "withdrawal count mismatch";
    if (spec.trace.count(EventKind::kSpeculate) != spec.speculations) return "speculation count mismatch";
    if (snapshot_from_trace(spec.trace) != spec.snapshots) return "snapshot replay mismatch";
  }
  if (spec.speculations != spec.hits + spec.withdrawals) return "speculation accounting mismatch";
  return {};
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  ExperimentResult result;
  const auto& test = data.split.test;
  const auto& vocab_src = data.lexicon->source_vocab();
  const auto& vocab_tgt = data.lexicon->target_vocab();
  std::vector<Sentence> test_refs(data.references.begin() + static_cast<std::ptrdiff_t>(data.split.test_offset),
                                  data.references.end());

  std::vector<PolicyConfig> policies;
  for (int k : cfg.k_values) policies.push_back(PolicyConfig::wait_k(k));
  for (double l : cfg.l_values) policies.push_back(PolicyConfig::adaptive(l));
  if (policies.empty()) throw Error("empty policy grid");

  std::vector<PredictorSpec> predictors;
  for (const auto& name : cfg.predictors) predictors.push_back(make_predictor(name, cfg, data));
  std::vector<double> accuracy;
  for (const auto& p : predictors) accuracy.push_back(predictor_accuracy(p, test));

  namespace fs = std::filesystem;
  const bool traces = cfg.write_traces && !cfg.out_dir.empty();
  if (traces) fs::create_directories(fs::path(cfg.out_dir) / "traces");

  auto emit_trace = [&](RunResult& r, RunConfig rc, const std::string& id) {
    if (!traces) return;
    r.trace.config = std::move(rc);
    write_text((fs::path(cfg.out_dir) / "traces" / (id + ".jsonl")).string(),
               serialize_trace(r.trace, vocab_src, vocab_tgt));
  };

  EngineConfig base_cfg;
  base_cfg.mode = cfg.mode;
  for (const auto& policy : policies) {
    const SimtModel model(data.lexicon, policy);
    std::vector<RunResult> base;
    try {
      base = run_corpus_baseline(model, test, base_cfg, cfg.threads);
    } catch (const std::exception& ex) {
      result.failures.push_back(policy.name() + " " + detail::fmt_num(policy.param()) + " baseline: " + ex.what());
      continue;
    }
    std::vector<MetricsReport> base_reports;
    std::vector<Sentence> base_out;
    for (std::size_t n = 0; n < base.size(); ++n) {
      const auto idx = data.split.test_offset + n;
      base_reports.push_back(report(base[n], cfg.corpus_id));
      base_out.push_back(base[n].output);
      RunRow row{run_id(policy.name(), policy.param(), "baseline", idx), policy.name(), policy.param(), 0.0, "none"};
      row.I = test[n].size();
      row.J = base_reports.back().target_len;
      row.al = base_reports.back().al;
      row.bleu = bleu_stats(base[n].output, test_refs[n]).score();
      result.runs.push_back(row);
      emit_trace(base[n], {policy.name(), policy.param(), 0.0, "none", cfg.corpus_id, cfg.gen.seed, "baseline", static_cast<int>(idx)},
                 row.run_id);
    }
    const double bleu_base = corpus_bleu(base_out, test_refs);

    for (double tau : cfg.taus) {
      for (std::size_t p = 0; p < predictors.size(); ++p) {
        SummaryRow sum;
        sum.policy = policy.name();
        sum.param = policy.param();
        sum.tau = tau;
        sum.predictor = predictors[p].name;
        sum.accuracy = accuracy[p];
        sum.bleu_baseline = bleu_base;
        const std::string label = sum.policy + " " + detail::fmt_num(sum.param) + " tau " + detail::fmt_num(tau) +
                                  " " + sum.predictor;
        EngineConfig ecfg;
        ecfg.tau = tau;
        ecfg.mode = cfg.mode;
        std::vector<RunResult> spec;
        try {
          spec = run_corpus(model, [&](const Sentence& s) { return predictors[p].bind(s); }, test, ecfg, cfg.threads);
        } catch (const std::exception& ex) {
          sum.ok = false;
          sum.error = ex.what();
          result.failures.push_back(label + ": " + ex.what());
          result.summary.push_back(std::move(sum));
          continue;
        }
        std::vector<Sentence> spec_out;
        double al_b = 0, al_s = 0;
        for (std::size_t n = 0; n < spec.size(); ++n) {
          const auto idx = data.split.test_offset + n;
          if (auto why = check_run(base[n], spec[n]); !why.empty()) {
            sum.ok = false;
            result.failures.push_back(label + " sentence " + std::to_string(idx) + ": " + why);
          }
          auto rep = report(spec[n], cfg.corpus_id);
          const double diff = al_diff(base_reports[n], rep);
          sum.sentence_al_diff.push_back(diff);
          al_b += base_reports[n].al;
          al_s += rep.al;
          sum.S += rep.speculations;
          sum.H += rep.hits;
          sum.W += rep.withdrawals;
          sum.J += rep.target_len;
          spec_out.push_back(spec[n].output);

          RunRow row{run_id(sum.policy, sum.param, detail::fmt_num(tau) + "_" + sum.predictor, idx), sum.policy,
                     sum.param, tau, sum.predictor};
          row.I = test[n].size();
          row.J = rep.target_len;
          row.W = rep.withdrawals;
          row.S = rep.speculations;
          row.H = rep.hits;
          row.al = rep.al;
          row.awr = rep.awr;
          row.bleu = bleu_stats(spec[n].output, test_refs[n]).score();
          result.runs.push_back(row);
          emit_trace(spec[n], {sum.policy, sum.param, tau, sum.predictor, cfg.corpus_id, cfg.gen.seed, "speculative", static_cast<int>(idx)},
                     row.run_id);
        }
        const auto count = static_cast<double>(spec.size());
        sum.sentences = spec.size();
        sum.al_baseline = al_b / count;
        sum.al_speculative = al_s / count;
        sum.al_diff = std::accumulate(sum.sentence_al_diff.begin(), sum.sentence_al_diff.end(), 0.0) / count;
        sum.awr = awr(sum.W, sum.J);
        sum.bleu_speculative = corpus_bleu(spec_out, test_refs);
        result.summary.push_back(std::move(sum));
      }
    }
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_experiment_data(cfg));
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string> kRunColumns{"run_id", "policy", "param", "tau", "predictor", "I", "J",
                                                  "W",      "S",      "H",     "AL",  "AWR",       "BLEU"};
inline const std::vector<std::string> kSummaryColumns{
    "policy", "param", "tau", "predictor", "sentences", "AL_baseline", "AL_speculative", "AL_diff",
    "AWR",    "BLEU_baseline", "BLEU_speculative", "accuracy", "S", "H", "W", "J", "status"};

inline std::string join_csv(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t n = 0; n < cells.size(); ++n) {
    if (n) out += ',';
    out += detail::csv_escape_free(cells[n]);
  }
  return out + "\n";
}

inline std::string runs_csv(const std::vector<RunRow>& rows) {
  using detail::fmt_num;
  std::string out = join_csv(kRunColumns);
  for (const auto& r : rows) {
    out += join_csv({r.run_id, r.policy, fmt_num(r.param), fmt_num(r.tau), r.predictor, std::to_string(r.I),
                     std::to_string(r.J), std::to_string(r.W), std::to_string(r.S), std::to_string(r.H), fmt_num(r.al),
                     fmt_num(r.awr), fmt_num(r.bleu)});
  }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  using detail::fmt_num;
  std::string out = join_csv(kSummaryColumns);
  for (const auto& r : rows) {
    out += join_csv({r.policy, fmt_num(r.param), fmt_num(r.tau), r.predictor, std::to_string(r.sentences),
                     fmt_num(r.al_baseline), fmt_num(r.al_speculative), fmt_num(r.al_diff), fmt_num(r.awr),
                     fmt_num(r.bleu_baseline), fmt_num(r.bleu_speculative), fmt_num(r.accuracy), std::to_string(r.S),
                     std::to_string(r.H), std::to_string(r.W), std::to_string(r.J),
                     r.ok ? "ok" : "error: " + r.error});
  }
  return out;
}

inline void write_results(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text((dir / "runs.csv").string(), runs_csv(r.runs));
  write_text((dir / "summary.csv").string(), summary_csv(r.summary));
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& file) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(file + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return cells;
}

inline CsvTable read_csv(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw Error(path + ": empty file");
  CsvTable t;
  t.header = split_csv_line(lines[0]);
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    t.rows.push_back(split_csv_line(lines[n]));
    if (t.rows.back().size() != t.header.size()) throw Error(path + ": ragged row " + std::to_string(n + 1));
  }
  return t;
}

/// Writes al_diff.csv (AL_baseline vs AL_diff), quality_latency.csv (AL vs
/// BLEU), predictor.csv (accuracy vs AL_diff) and threshold.csv (tau vs AWR and
/// AL_diff) from summary.csv. Grid points with AWR above max_awr are dropped
/// from al_diff.csv.
inline std::vector<std::filesystem::path> plot_data(const std::filesystem::path& results_dir,
                                                    double max_awr = INFINITY) {
  const auto summary_path = results_dir / "summary.csv";
  if (!std::filesystem::exists(summary_path)) throw Error("no summary.csv in " + results_dir.string());
  const auto file = summary_path.string();
  const auto t = read_csv(file);
  const auto c_policy = t.column("policy", file), c_param = t.column("param", file), c_tau = t.column("tau", file),
             c_pred = t.column("predictor", file), c_alb = t.column("AL_baseline", file),
             c_als = t.column("AL_speculative", file), c_diff = t.column("AL_diff", file), c_awr = t.column("AWR", file),
             c_bb = t.column("BLEU_baseline", file), c_bs = t.column("BLEU_speculative", file),
             c_acc = t.column("accuracy", file), c_status = t.column("status", file);

  std::vector<const std::vector<std::string>*> ok_rows;
  for (const auto& r : t.rows) {
    if (r[c_status] == "ok") ok_rows.push_back(&r);
  }

  std::string gain = join_csv({"policy", "param", "tau", "predictor", "AL_baseline", "AL_diff"});
  std::string quality = join_csv({"policy", "param", "mode", "AL", "BLEU"});
  std::string by_predictor = join_csv({"policy", "param", "tau", "predictor", "accuracy", "AL_diff"});
  std::string threshold = join_csv({"policy", "param", "predictor", "tau", "AWR", "AL_diff"});

  std::map<std::pair<std::string, std::string>, bool> baseline_seen;
  for (const auto* r : ok_rows) {
    const auto& row = *r;
    if (std::stod(row[c_awr]) <= max_awr) {
      gain += join_csv({row[c_policy], row[c_param], row[c_tau], row[c_pred], row[c_alb], row[c_diff]});
    }
    if (!baseline_seen[{row[c_policy], row[c_param]}]) {
      baseline_seen[{row[c_policy], row[c_param]}] = true;
      quality += join_csv({row[c_policy], row[c_param], "baseline", row[c_alb], row[c_bb]});
    }
    quality += join_csv({row[c_policy], row[c_param], "speculative-" + row[c_tau] + "-" + row[c_pred], row[c_als], row[c_bs]});
    by_predictor += join_csv({row[c_policy], row[c_param], row[c_tau], row[c_pred], row[c_acc], row[c_diff]});
  }

  auto by_tau = ok_rows;
  std::stable_sort(by_tau.begin(), by_tau.end(),
                   [&](auto* a, auto* b) { return std::stod((*a)[c_tau]) < std::stod((*b)[c_tau]); });
  for (const auto* r : by_tau) {
    const auto& row = *r;
    threshold += join_csv({row[c_policy], row[c_param], row[c_pred], row[c_tau], row[c_awr], row[c_diff]});
  }

  std::vector<std::filesystem::path> written;
  for (auto [name, text] : {std::pair{"al_diff.csv", &gain}, std::pair{"quality_latency.csv", &quality},
                            std::pair{"predictor.csv", &by_predictor}, std::pair{"threshold.csv", &threshold}}) {
    written.push_back(results_dir / name);
    write_text(written.back().string(), *text);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Metrics from trace files

struct TraceMetrics {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;  // one row per speculative configuration, paired with baselines
};

/// Recomputes per-run metrics from traces. References are indexed by the
/// trace's sentence number; BLEU columns are 0 when no references are given.
inline TraceMetrics metrics_from_traces(const std::vector<std::string>& trace_texts,
                                        const std::vector<std::string>& reference_lines) {
  Vocabulary src, tgt;
  std::vector<Sentence> refs;
  for (const auto& line : reference_lines) refs.push_back(encode(line, tgt));

  struct Parsed {
    RunConfig cfg;
    SnapshotMatrix snaps;
    std::size_t W, S, H;
    MetricsReport rep;
  };
  std::vector<Parsed> parsed;
  for (const auto& text : trace_texts) {
    auto trace = parse_trace(text, src, tgt);
    Parsed p{trace.config, snapshot_from_trace(trace), trace.count(EventKind::kWithdraw),
             trace.count(EventKind::kSpeculate), trace.count(EventKind::kCommit), {}};
    RunResult rr;
    rr.snapshots = p.snaps;
    rr.withdrawals = p.W;
    rr.speculations = p.S;
    rr.hits = p.H;
    p.rep = report(rr, p.cfg.corpus);
    parsed.push_back(std::move(p));
  }
  std::sort(parsed.begin(), parsed.end(), [](const Parsed& a, const Parsed& b) {
    return std::tie(a.cfg.policy, a.cfg.param, a.cfg.mode, a.cfg.tau, a.cfg.predictor, a.cfg.sentence) <
           std::tie(b.cfg.policy, b.cfg.param, b.cfg.mode, b.cfg.tau, b.cfg.predictor, b.cfg.sentence);
  });

  TraceMetrics out;
  std::map<std::tuple<std::string, double, std::string, int>, const Parsed*> baselines;
  for (const auto& p : parsed) {
    const auto& c = p.cfg;
    RunRow row{run_id(c.policy, c.param, c.mode == "baseline" ? "baseline" : detail::fmt_num(c.tau) + "_" + c.predictor,
                      static_cast<std::size_t>(c.sentence)),
               c.policy, c.param, c.tau, c.predictor};
    row.I = p.rep.source_len;
    row.J = p.rep.target_len;
    row.W = p.W;
    row.S = p.S;
    row.H = p.H;
    row.al = p.rep.al;
    row.awr = p.rep.awr;
    if (c.sentence >= 0 && static_cast<std::size_t>(c.sentence) < refs.size()) {
      row.bleu = bleu_stats(p.snaps.final_row(), refs[static_cast<std::size_t>(c.sentence)]).score();
    }
    out.runs.push_back(row);
    if (c.mode == "baseline") baselines[{c.policy, c.param, c.corpus, c.sentence}] = &p;
  }

  std::map<std::tuple<std::string, double, double, std::string>, SummaryRow> groups;
  for (const auto& p : parsed) {
    const auto& c = p.cfg;
    if (c.mode == "baseline") continue;
    auto it = baselines.find({c.policy, c.param, c.corpus, c.sentence});
    if (it == baselines.end()) continue;
    auto& g = groups[{c.policy, c.param, c.tau, c.predictor}];
    g.policy = c.policy;
    g.param = c.param;
    g.tau = c.tau;
    g.predictor = c.predictor;
    ++g.sentences;
    g.al_baseline += it->second->rep.al;
    g.al_speculative += p.rep.al;
    g.sentence_al_diff.push_back(al_diff(it->second->rep, p.rep));
    g.S += p.S;
    g.H += p.H;
    g.W += p.W;
    g.J += p.rep.target_len;
  }
  for (auto& [key, g] : groups) {
    const auto n = static_cast<double>(g.sentences);
    g.al_baseline /= n;
    g.al_speculative /= n;
    g.al_diff = std::accumulate(g.sentence_al_diff.begin(), g.sentence_al_diff.end(), 0.0) / n;
    g.awr = awr(g.W, g.J);
    g.accuracy = g.S ? static_cast<double>(g.H) / static_cast<double>(g.S) : 0.0;
    out.summary.push_back(std::move(g));
  }
  return out;
}

}  // namespace simtbp
