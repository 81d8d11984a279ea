#include <gtest/gtest.h>

#include <filesystem>

#include "simtbp/harness.hpp"

using namespace simtbp;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("simtbp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::string out;
  for (const auto& l : read_lines(p.string())) out += l + "\n";
  return out;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.n_sentences = 300;
  cfg.k_values = {1, 2};
  cfg.l_values = {0.3};
  cfg.taus = {0.0, 0.5, 1.0};
  cfg.predictors = {"in-domain", "out-of-domain", "oracle", "always-wrong"};
  cfg.threads = 2;
  return cfg;
}

// Spearman correlation for distinct values.
double rank_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t n = 0; n < idx.size(); ++n) r[idx[n]] = static_cast<double>(n);
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1 - 6 * d2 / (n * (n * n - 1));
}

}  // namespace

TEST(GenCorpus, DeterministicFromSeed) {
  MarkovSourceSpec spec;
  auto a = gen_corpus(spec, 50), b = gen_corpus(spec, 50);
  EXPECT_EQ(a.source_text(), b.source_text());
  EXPECT_EQ(a.lexicon->to_tsv(), b.lexicon->to_tsv());
  EXPECT_EQ(a.reference_text(), b.reference_text());
  spec.seed = 8;
  EXPECT_NE(gen_corpus(spec, 50).source_text(), a.source_text());

  auto d1 = scratch_dir("gen1"), d2 = scratch_dir("gen2");
  write_corpus_files(a, d1);
  write_corpus_files(b, d2);
  for (auto f : {"source.txt", "lexicon.tsv", "reference.txt"}) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
}

TEST(GenCorpus, ShapeFollowsParameters) {
  MarkovSourceSpec spec;
  spec.vocab_size = 10;
  spec.rho = 0.3;
  spec.min_len = 3;
  spec.max_len = 6;
  auto c = gen_corpus(spec, 200);
  ASSERT_EQ(c.sources.size(), 200u);
  for (const auto& s : c.sources) {
    EXPECT_GE(s.size(), 3u);
    EXPECT_LE(s.size(), 6u);
  }
  int ambiguous = 0;
  for (TokenId t = kFirstRegular; static_cast<std::size_t>(t) < c.lexicon->source_vocab().size(); ++t) {
    ambiguous += c.lexicon->is_ambiguous(t);
  }
  EXPECT_EQ(ambiguous, 3);
  for (std::size_t n = 0; n < c.sources.size(); ++n) {
    EXPECT_EQ(c.references[n], full_sentence_translate(*c.lexicon, c.sources[n]));
  }
  spec.kappa = 0;
  EXPECT_THROW(gen_corpus(spec, 10), Error);
  spec.kappa = 0.1;
  EXPECT_THROW(gen_corpus(spec, 0), Error);
}

TEST(GenCorpus, NoAmbiguityMeansWaitOneIsExact) {
  MarkovSourceSpec spec;
  spec.rho = 0;
  auto c = gen_corpus(spec, 100);
  SimtModel m(c.lexicon, PolicyConfig::wait_k(1));
  std::vector<Sentence> out;
  for (const auto& s : c.sources) out.push_back(run_baseline(m, s).output);
  EXPECT_DOUBLE_EQ(corpus_bleu(out, c.references), 1.0);
}

TEST(GenCorpus, LowerKappaIsMorePredictable) {
  std::vector<double> acc;
  for (double kappa : {0.01, 0.1, 1.0, 10.0}) {
    MarkovSourceSpec spec;
    spec.kappa = kappa;
    auto c = gen_corpus(spec, 2000);
    auto split = split_corpus(c.sources);
    acc.push_back(evaluate(train(split.train, c.lexicon->source_vocab(), 2), split.test).accuracy());
  }
  for (std::size_t n = 1; n < acc.size(); ++n) EXPECT_GT(acc[n - 1], acc[n]);
  EXPECT_GT(acc.front(), 0.6);
}

TEST(Split, NinetyTen) {
  std::vector<Sentence> corpus(10, Sentence{4});
  auto s = split_corpus(corpus);
  EXPECT_EQ(s.train.size(), 9u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.test_offset, 9u);
}

TEST(Experiment, SummaryCoversGridAndPassesChecks) {
  auto cfg = small_config();
  auto r = run_experiment(cfg);
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.summary.size(), 3u * 3u * 4u);
  for (const auto& s : r.summary) {
    EXPECT_TRUE(s.ok);
    EXPECT_EQ(s.sentences, 30u);
    EXPECT_EQ(s.S, s.H + s.W);
    EXPECT_DOUBLE_EQ(s.bleu_speculative, s.bleu_baseline);
    if (s.predictor == "oracle") {
      EXPECT_EQ(s.W, 0u);
      EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    }
    if (s.tau == 1.0 && s.predictor != "oracle" && s.predictor != "always-wrong") {
      EXPECT_EQ(s.al_diff, 0.0);
    }
    if (s.predictor == "always-wrong" && s.tau < 1.0) {
      EXPECT_GT(s.W, 0u);
    }
  }
  // baseline row plus one row per speculative configuration for every sentence
  EXPECT_EQ(r.runs.size(), 3u * 30u * (1 + 3 * 4));
}

TEST(Experiment, CsvIsByteIdenticalAcrossRunsAndThreads) {
  auto cfg = small_config();
  auto a = run_experiment(cfg);
  cfg.threads = 1;
  cfg.mode = EngineMode::kConcurrent;
  auto b = run_experiment(cfg);
  EXPECT_EQ(runs_csv(a.runs), runs_csv(b.runs));
  EXPECT_EQ(summary_csv(a.summary), summary_csv(b.summary));
  auto header = summary_csv({});
  EXPECT_EQ(header,
            "policy,param,tau,predictor,sentences,AL_baseline,AL_speculative,AL_diff,AWR,BLEU_baseline,"
            "BLEU_speculative,accuracy,S,H,W,J,status\n");
}

TEST(Experiment, ReadsCorpusFiles) {
  auto dir = scratch_dir("files");
  MarkovSourceSpec spec;
  auto c = gen_corpus(spec, 300);
  write_corpus_files(c, dir);
  write_text((dir / "ood.txt").string(),
             GeneratedCorpus::lines(gen_out_of_domain(spec, c.lexicon->source_vocab(), 270), c.lexicon->source_vocab()));
  auto gen_cfg = small_config();
  auto file_cfg = gen_cfg;
  file_cfg.corpus_path = (dir / "source.txt").string();
  file_cfg.lexicon_path = (dir / "lexicon.tsv").string();
  file_cfg.reference_path = (dir / "reference.txt").string();
  file_cfg.ood_corpus_path = (dir / "ood.txt").string();
  EXPECT_EQ(summary_csv(run_experiment(gen_cfg).summary), summary_csv(run_experiment(file_cfg).summary));

  file_cfg.lexicon_path.clear();
  EXPECT_THROW(run_experiment(file_cfg), Error);
}

TEST(Experiment, UnknownPredictorAndEmptyGrid) {
  auto cfg = small_config();
  cfg.predictors = {"psychic"};
  EXPECT_THROW(run_experiment(cfg), Error);
  cfg = small_config();
  cfg.k_values.clear();
  cfg.l_values.clear();
  EXPECT_THROW(run_experiment(cfg), Error);
}

TEST(Experiment, TracesReproduceMetrics) {
  auto dir = scratch_dir("traces");
  auto cfg = small_config();
  cfg.k_values = {1};
  cfg.l_values.clear();
  cfg.out_dir = dir.string();
  cfg.write_traces = true;
  auto r = run_experiment(cfg);
  std::vector<std::string> texts;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "traces")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) texts.push_back(slurp(f));
  ASSERT_EQ(texts.size(), r.runs.size());
  auto m = metrics_from_traces(texts, {});
  ASSERT_EQ(m.summary.size(), r.summary.size());
  for (const auto& s : r.summary) {
    auto it = std::find_if(m.summary.begin(), m.summary.end(), [&](const SummaryRow& x) {
      return x.policy == s.policy && x.param == s.param && x.tau == s.tau && x.predictor == s.predictor;
    });
    ASSERT_NE(it, m.summary.end());
    EXPECT_DOUBLE_EQ(it->al_diff, s.al_diff);
    EXPECT_DOUBLE_EQ(it->al_baseline, s.al_baseline);
    EXPECT_EQ(it->W, s.W);
    EXPECT_EQ(it->J, s.J);
    EXPECT_DOUBLE_EQ(it->awr, s.awr);
  }
}

TEST(PlotData, WritesFourTablesWithTauOrder) {
  auto dir = scratch_dir("plot");
  auto cfg = small_config();
  cfg.taus = {1.0, 0.0, 0.5};
  write_results(run_experiment(cfg), dir);
  auto files = plot_data(dir);
  ASSERT_EQ(files.size(), 4u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f));
  auto threshold = read_csv((dir / "threshold.csv").string());
  EXPECT_EQ(threshold.header, (std::vector<std::string>{"policy", "param", "predictor", "tau", "AWR", "AL_diff"}));
  EXPECT_EQ(threshold.rows.size(), 36u);
  for (std::size_t n = 1; n < threshold.rows.size(); ++n) EXPECT_LE(std::stod(threshold.rows[n - 1][3]), std::stod(threshold.rows[n][3]));
  auto gain = read_csv((dir / "al_diff.csv").string());
  EXPECT_EQ(gain.rows.size(), 36u);

  plot_data(dir, 0.0);
  for (const auto& row : read_csv((dir / "al_diff.csv").string()).rows) {
    EXPECT_TRUE(row[3] == "oracle" || row[2] == "1");
  }
}

TEST(PlotData, MissingInputs) {
  auto dir = scratch_dir("plot_empty");
  EXPECT_THROW(plot_data(dir), Error);
  write_text((dir / "summary.csv").string(), "policy,param\nwait-k,1\n");
  try {
    plot_data(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("summary.csv: missing column"), std::string::npos);
  }
}

// Across the kappa grid, better predictors buy more latency.
TEST(Coupling, AccuracyAndLatencyGainTrackKappa) {
  std::vector<double> acc, gain;
  for (double kappa : {0.01, 0.1, 1.0, 10.0}) {
    auto cfg = small_config();
    cfg.gen.kappa = kappa;
    cfg.n_sentences = 2000;
    cfg.k_values = {1};
    cfg.l_values.clear();
    cfg.taus = {0.0};
    cfg.predictors = {"in-domain"};
    auto r = run_experiment(cfg);
    ASSERT_TRUE(r.ok());
    auto data = load_experiment_data(cfg);
    acc.push_back(predictor_accuracy(make_predictor("in-domain", cfg, data), data.split.test));
    gain.push_back(r.summary.front().al_diff);
  }
  for (std::size_t n = 1; n < acc.size(); ++n) EXPECT_GT(acc[n - 1], acc[n]);
  EXPECT_GT(rank_correlation(acc, gain), 0.9);
}
