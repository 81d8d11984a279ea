#include <gtest/gtest.h>

#include <random>

#include "simtbp/simt_model.hpp"

using namespace simtbp;

namespace {

std::shared_ptr<const Lexicon> toy_lexicon() {
  return std::make_shared<Lexicon>(Lexicon::from_tsv({
      "a\t*\tA",
      "b\t*\tB2",
      "b\tc\tB1",
      "c\t*\tC",
  }));
}

Sentence ids(const Lexicon& lex, std::string_view line) { return encode_strict(line, lex.source_vocab()); }

TokenId step(const SimtModel& m, const Sentence& src, const Sentence& tgt, bool complete = false) {
  return m.step(SourceView{src, complete}, tgt);
}

std::string tgt(const Lexicon& lex, TokenId t) { return lex.target_vocab().surface(t); }

}  // namespace

TEST(Lexicon, LoadsAndTranslates) {
  auto lex = toy_lexicon();
  auto a = lex->source_vocab().lookup("a"), b = lex->source_vocab().lookup("b"), c = lex->source_vocab().lookup("c");
  EXPECT_TRUE(lex->is_ambiguous(b));
  EXPECT_FALSE(lex->is_ambiguous(a));
  EXPECT_EQ(tgt(*lex, lex->translate(b, c)), "B1");
  EXPECT_EQ(tgt(*lex, lex->translate(b, a)), "B2");
  EXPECT_EQ(tgt(*lex, lex->translate(b, Lexicon::kNone)), "B2");
  EXPECT_EQ(tgt(*lex, lex->translate(a, c)), "A");
}

TEST(Lexicon, RejectsDuplicatesAndMissingDefaults) {
  EXPECT_THROW(Lexicon::from_tsv({"a\t*\tA", "a\t*\tA2"}), Error);
  EXPECT_THROW(Lexicon::from_tsv({"a\t*\tA", "b\t*\tB", "a\tb\tX", "a\tb\tY"}), Error);
  EXPECT_THROW(Lexicon::from_tsv({"a\tb\tX", "a\t*\tA"}), Error);  // b has no default
  EXPECT_THROW(Lexicon::from_tsv({"a A"}), Error);
}

TEST(Lexicon, TsvRoundTrip) {
  auto lex = toy_lexicon();
  auto tsv = lex->to_tsv();
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < tsv.size();) {
    auto nl = tsv.find('\n', pos);
    lines.push_back(tsv.substr(pos, nl - pos));
    pos = nl + 1;
  }
  EXPECT_EQ(Lexicon::from_tsv(lines).to_tsv(), tsv);
}

TEST(WaitK, ReadsUntilKTokens) {
  auto lex = toy_lexicon();
  SimtModel m(lex, PolicyConfig::wait_k(2));
  EXPECT_EQ(step(m, ids(*lex, "a"), {}), kPhi);
}

TEST(WaitK, DirectRule) {
  auto lex = toy_lexicon();
  SimtModel m(lex, PolicyConfig::wait_k(1));
  EXPECT_EQ(tgt(*lex, step(m, ids(*lex, "a"), {})), "A");
}

TEST(WaitK, AmbiguousTokenDependsOnVisibleSuccessor) {
  auto lex = toy_lexicon();
  SimtModel m(lex, PolicyConfig::wait_k(1));
  EXPECT_EQ(tgt(*lex, step(m, ids(*lex, "b"), {})), "B2");
  EXPECT_EQ(tgt(*lex, step(m, ids(*lex, "b c"), {})), "B1");
}

TEST(WaitK, TailAfterEndOfSource) {
  auto lex = toy_lexicon();
  SimtModel m(lex, PolicyConfig::wait_k(3));
  auto src = ids(*lex, "a b");
  EXPECT_EQ(step(m, src, {}), kPhi);
  Sentence out;
  for (TokenId t; (t = step(m, src, out, true)) != kEos;) out.push_back(t);
  EXPECT_EQ(decode(out, lex->target_vocab()), "A B2");
}

TEST(Adaptive, ThresholdMapping) {
  EXPECT_DOUBLE_EQ(PolicyConfig::adaptive(0.5).threshold(), 0.6);
  EXPECT_DOUBLE_EQ(PolicyConfig::adaptive(0.02).threshold(), 1.0);
  EXPECT_NEAR(PolicyConfig::adaptive(1.0).threshold(), 0.1, 1e-12);
  EXPECT_THROW(PolicyConfig::adaptive(0.0), Error);
  EXPECT_THROW(PolicyConfig::adaptive(1.5), Error);
  EXPECT_THROW(PolicyConfig::wait_k(0), Error);
}

TEST(Adaptive, WaitsForConditionerUnlessLatencyWeightIsHigh) {
  auto lex = toy_lexicon();
  SimtModel careful(lex, PolicyConfig::adaptive(0.5));
  SimtModel eager(lex, PolicyConfig::adaptive(0.6));
  EXPECT_EQ(step(careful, ids(*lex, "b"), {}), kPhi);
  EXPECT_EQ(tgt(*lex, step(eager, ids(*lex, "b"), {})), "B2");
  EXPECT_EQ(tgt(*lex, step(careful, ids(*lex, "b c"), {})), "B1");
  // unambiguous tokens are written as soon as they are read
  EXPECT_EQ(tgt(*lex, step(careful, ids(*lex, "a"), {})), "A");
  // nothing left to translate: read
  auto a = ids(*lex, "a");
  EXPECT_EQ(step(careful, a, a), kPhi);
  // ambiguous last token after end of source
  EXPECT_EQ(tgt(*lex, step(careful, ids(*lex, "b"), {}, true)), "B2");
}

TEST(FullSentence, Examples) {
  auto lex = toy_lexicon();
  EXPECT_EQ(decode(full_sentence_translate(*lex, ids(*lex, "a")), lex->target_vocab()), "A");
  EXPECT_EQ(decode(full_sentence_translate(*lex, ids(*lex, "b c")), lex->target_vocab()), "B1 C");
  EXPECT_THROW(full_sentence_translate(*lex, Sentence{}), Error);
  EXPECT_THROW(full_sentence_translate(*lex, Sentence{kUnk}), Error);
}

TEST(SimtModelProperty, StepIsDeterministic) {
  auto lex = toy_lexicon();
  std::mt19937 gen(11);
  std::vector<SimtModel> models{SimtModel(lex, PolicyConfig::wait_k(1)), SimtModel(lex, PolicyConfig::wait_k(3)),
                                SimtModel(lex, PolicyConfig::adaptive(0.2)), SimtModel(lex, PolicyConfig::adaptive(0.7))};
  for (int n = 0; n < 10000; ++n) {
    Sentence src(1 + gen() % 8);
    for (auto& t : src) t = static_cast<TokenId>(4 + gen() % 3);
    Sentence out(gen() % (src.size() + 1));
    for (auto& t : out) t = static_cast<TokenId>(4 + gen() % 3);
    const bool complete = gen() % 2;
    const auto& m = models[gen() % models.size()];
    EXPECT_EQ(m.step({src, complete}, out), m.step({src, complete}, out));
  }
}

// Adaptive: a larger latency weight never adds READ decisions, i.e. after
// every read at least as many tokens have been written.
TEST(SimtModelProperty, AdaptiveMonotoneInLatencyWeight) {
  auto lex = toy_lexicon();
  std::mt19937 gen(3);
  const std::vector<double> weights{0.02, 0.05, 0.1, 0.2, 0.5, 0.6, 0.8, 1.0};
  for (int n = 0; n < 300; ++n) {
    Sentence src(1 + gen() % 10);
    for (auto& t : src) t = static_cast<TokenId>(4 + gen() % 3);
    std::vector<std::size_t> prev(src.size(), 0);
    for (double w : weights) {
      SimtModel m(lex, PolicyConfig::adaptive(w));
      Sentence out;
      for (std::size_t i = 1; i <= src.size(); ++i) {
        for (TokenId t; (t = m.step({std::span<const TokenId>(src).first(i), false}, out)) != kPhi;) out.push_back(t);
        EXPECT_GE(out.size(), prev[i - 1]);
        prev[i - 1] = out.size();
      }
    }
  }
}
