// simtbp: command-line harness for speculative simultaneous translation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "simtbp/harness.hpp"

namespace fs = std::filesystem;
using namespace simtbp;

namespace {

void add_gen_options(CLI::App* app, MarkovSourceSpec& spec, std::size_t& sentences) {
  app->add_option("--vocab-size", spec.vocab_size, "Number of source word types")->capture_default_str();
  app->add_option("--kappa", spec.kappa, "Dirichlet concentration of transition rows (lower = more predictable)")
      ->capture_default_str();
  app->add_option("--rho", spec.rho, "Fraction of source tokens with successor-dependent translations")
      ->capture_default_str();
  app->add_option("--min-len", spec.min_len)->capture_default_str();
  app->add_option("--max-len", spec.max_len)->capture_default_str();
  app->add_option("--seed", spec.seed)->capture_default_str();
  app->add_option("--sentences", sentences, "Number of sentences to generate")->capture_default_str();
}

void add_data_options(CLI::App* app, ExperimentConfig& cfg) {
  app->add_option("--corpus", cfg.corpus_path, "Source corpus (one sentence per line); generated when omitted");
  app->add_option("--lexicon", cfg.lexicon_path, "Lexicon TSV (required with --corpus)");
  app->add_option("--references", cfg.reference_path, "Reference translations; full-sentence output when omitted");
  app->add_option("--ood-corpus", cfg.ood_corpus_path, "Training corpus for the out-of-domain predictor");
  app->add_option("--corpus-id", cfg.corpus_id)->capture_default_str();
  add_gen_options(app, cfg.gen, cfg.n_sentences);
  app->add_option("--order", cfg.order, "N-gram order of trained predictors")->capture_default_str();
  app->add_option("--alpha", cfg.alpha, "Add-alpha smoothing")->capture_default_str();
  app->add_option("--beta", cfg.beta, "Backoff interpolation weight")->capture_default_str();
  app->add_option("--out", cfg.out_dir, "Results directory")->required();
  app->add_flag("--traces", cfg.write_traces, "Write one JSONL trace per run");
  app->add_option("--threads", cfg.threads)->capture_default_str();
}

void add_mode_option(CLI::App* app, std::string& mode) {
  app->add_option("--mode", mode, "Engine mode")->check(CLI::IsMember({"sequential", "concurrent"}))->capture_default_str();
}

int finish_experiment(ExperimentConfig& cfg, const std::string& mode) {
  cfg.mode = mode == "concurrent" ? EngineMode::kConcurrent : EngineMode::kSequential;
  auto result = run_experiment(cfg);
  write_results(result, cfg.out_dir);
  for (const auto& f : result.failures) std::cerr << "FAIL " << f << "\n";
  std::cout << "wrote " << result.summary.size() << " configurations, " << result.runs.size() << " runs to "
            << cfg.out_dir << "\n";
  return result.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branch-prediction speculation for simultaneous translation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file; options go in a section named after the subcommand");
  app.fallthrough();

  // gen-corpus
  MarkovSourceSpec gen_spec;
  std::size_t gen_sentences = 1000;
  std::string gen_out;
  bool gen_ood = false;
  auto* gen = app.add_subcommand("gen-corpus", "Generate source.txt, lexicon.tsv and reference.txt");
  add_gen_options(gen, gen_spec, gen_sentences);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--ood", gen_ood, "Also write ood_source.txt from an independently seeded chain");

  // train-lm
  std::string lm_corpus, lm_lexicon, lm_out;
  int lm_order = 2;
  double lm_alpha = 0.1, lm_beta = 0.9;
  auto* train_lm = app.add_subcommand("train-lm", "Train an n-gram branch predictor");
  train_lm->add_option("--corpus", lm_corpus)->required();
  train_lm->add_option("--lexicon", lm_lexicon, "Take the vocabulary from this lexicon instead of the corpus");
  train_lm->add_option("--order", lm_order)->capture_default_str();
  train_lm->add_option("--alpha", lm_alpha)->capture_default_str();
  train_lm->add_option("--beta", lm_beta)->capture_default_str();
  train_lm->add_option("--out", lm_out)->required();

  // lm-stats
  std::string stats_model, stats_heldout;
  auto* lm_stats = app.add_subcommand("lm-stats", "Perplexity and next-token accuracy on held-out text");
  lm_stats->add_option("--model", stats_model)->required();
  lm_stats->add_option("--heldout", stats_heldout)->required();

  // run
  ExperimentConfig run_cfg;
  std::string run_policy = "wait-k", run_mode = "sequential", run_predictor = "in-domain";
  double run_param = 3, run_tau = 0;
  auto* run = app.add_subcommand("run", "Baseline and speculative passes for one configuration");
  add_data_options(run, run_cfg);
  run->add_option("--policy", run_policy)->check(CLI::IsMember({"wait-k", "adaptive"}))->capture_default_str();
  run->add_option("--param", run_param,
                  "k for wait-k; latency weight L in (0,1] for adaptive (write threshold = min(1, 1.1 - L))")
      ->capture_default_str();
  run->add_option("--tau", run_tau, "Speculate only when prediction probability >= tau")->capture_default_str();
  run->add_option("--predictor", run_predictor)
      ->check(CLI::IsMember({"in-domain", "out-of-domain", "oracle", "always-wrong"}))
      ->capture_default_str();
  add_mode_option(run, run_mode);

  // sweep
  ExperimentConfig sweep_cfg;
  std::string sweep_mode = "sequential";
  auto* sweep = app.add_subcommand("sweep", "Grid of policies, thresholds and predictors");
  add_data_options(sweep, sweep_cfg);
  sweep->add_option("--k-grid", sweep_cfg.k_values, "wait-k lags")->delimiter(',');
  sweep->add_option("--l-grid", sweep_cfg.l_values, "Adaptive latency weights")->delimiter(',');
  sweep->add_option("--tau-grid", sweep_cfg.taus, "Thresholds")->delimiter(',')->capture_default_str();
  sweep->add_option("--predictors", sweep_cfg.predictors, "in-domain,out-of-domain,oracle,always-wrong")
      ->delimiter(',')
      ->capture_default_str();
  add_mode_option(sweep, sweep_mode);

  // metrics
  std::vector<std::string> metrics_inputs;
  std::string metrics_refs, metrics_out;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from trace files");
  metrics->add_option("--traces", metrics_inputs, "Trace files or directories")->required();
  metrics->add_option("--references", metrics_refs, "Reference file indexed by sentence number");
  metrics->add_option("--out", metrics_out, "Output directory")->required();

  // plot-data
  std::string plot_results;
  double plot_max_awr = INFINITY;
  auto* plot = app.add_subcommand("plot-data", "Emit plot-ready CSV tables from a results directory");
  plot->add_option("--results", plot_results)->required();
  plot->add_option("--max-awr", plot_max_awr, "Drop grid points above this AWR from the AL_diff table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto corpus = gen_corpus(gen_spec, gen_sentences);
      write_corpus_files(corpus, gen_out);
      if (gen_ood) {
        auto ood = gen_out_of_domain(gen_spec, corpus.lexicon->source_vocab(), gen_sentences);
        write_text((fs::path(gen_out) / "ood_source.txt").string(),
                   GeneratedCorpus::lines(ood, corpus.lexicon->source_vocab()));
      }
      std::cout << "wrote " << gen_sentences << " sentences to " << gen_out << "\n";
    } else if (*train_lm) {
      auto lines = read_lines(lm_corpus);
      Vocabulary vocab;
      if (!lm_lexicon.empty()) {
        vocab = Lexicon::from_tsv(read_lines(lm_lexicon)).source_vocab();
      } else {
        vocab = build_vocabulary(lines);
      }
      std::vector<Sentence> corpus;
      for (const auto& l : lines) {
        if (!split_tokens(l).empty()) corpus.push_back(encode_strict(l, vocab));
      }
      auto model = train(corpus, vocab, lm_order, lm_alpha, lm_beta);
      write_text(lm_out, model.serialize());
      std::cout << "trained order-" << lm_order << " model on " << corpus.size() << " sentences\n";
    } else if (*lm_stats) {
      auto model = NgramModel::deserialize(read_lines(stats_model));
      std::vector<Sentence> heldout;
      for (const auto& l : read_lines(stats_heldout)) {
        if (!split_tokens(l).empty()) heldout.push_back(encode(l, model.vocabulary()));
      }
      auto st = evaluate(model, heldout);
      std::cout << "sentences " << heldout.size() << "\npredictions " << st.predictions << "\naccuracy "
                << st.accuracy() << "\nperplexity " << st.perplexity() << "\n";
    } else if (*run) {
      if (run_policy == "wait-k") {
        run_cfg.k_values = {static_cast<int>(run_param)};
      } else {
        run_cfg.l_values = {run_param};
      }
      run_cfg.taus = {run_tau};
      run_cfg.predictors = {run_predictor};
      return finish_experiment(run_cfg, run_mode);
    } else if (*sweep) {
      return finish_experiment(sweep_cfg, sweep_mode);
    } else if (*metrics) {
      std::vector<fs::path> files;
      for (const auto& in : metrics_inputs) {
        if (fs::is_directory(in)) {
          for (const auto& e : fs::directory_iterator(in)) {
            if (e.path().extension() == ".jsonl") files.push_back(e.path());
          }
        } else {
          files.emplace_back(in);
        }
      }
      std::sort(files.begin(), files.end());
      std::vector<std::string> texts;
      for (const auto& f : files) {
        std::string text;
        for (const auto& l : read_lines(f.string())) text += l + "\n";
        texts.push_back(std::move(text));
      }
      auto refs = metrics_refs.empty() ? std::vector<std::string>{} : read_lines(metrics_refs);
      auto m = metrics_from_traces(texts, refs);
      fs::create_directories(metrics_out);
      write_text((fs::path(metrics_out) / "runs.csv").string(), runs_csv(m.runs));
      write_text((fs::path(metrics_out) / "summary.csv").string(), summary_csv(m.summary));
      std::cout << "read " << texts.size() << " traces\n";
    } else if (*plot) {
      for (const auto& p : plot_data(plot_results, plot_max_awr)) std::cout << p.string() << "\n";
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
