#include <gtest/gtest.h>

#include <cmath>

#include "abbrx/corpus.hpp"
#include "abbrx/error.hpp"
#include "abbrx/rng.hpp"
#include "support.hpp"

using namespace abbrx;
using abbrx::testing::make_corpus;
using abbrx::testing::TempDir;

namespace {

using Strings = std::vector<std::string>;

// Independent scan: every sentence, every start position.
std::vector<Occurrence> brute_force(const Corpus& corpus, const Phrase& phrase) {
  std::vector<Occurrence> out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus[d];
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      const auto [b, e] = doc.sentences[s];
      for (std::size_t i = b; i + phrase.size() <= e; ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < phrase.size() && ok; ++k) ok = doc.tokens[i + k] == phrase[k];
        if (ok) out.push_back({d, s, i});
      }
    }
  }
  return out;
}

}  // namespace

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("Patient was administered intravenous fluid"),
            (Strings{"patient", "was", "administered", "intravenous", "fluid"}));
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, StripsPunctuation) {
  EXPECT_EQ(tokenize("IVF, then IVF."), (Strings{"ivf", "then", "ivf"}));
}

TEST(Tokenize, KeepsUnderscoreAndDigits) {
  EXPECT_EQ(tokenize("in_vitro  B12;x-ray"), (Strings{"in_vitro", "b12", "x", "ray"}));
}

TEST(Tokenize, IdempotentOnOwnOutput) {
  Rng rng(7);
  const std::string alphabet = "aB3_ ,.;-!?\tZq9";
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const auto len = rng.index(40);
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng.index(alphabet.size())];
    const auto once = tokenize(text);
    EXPECT_EQ(tokenize(phrase_to_string(once)), once) << text;
  }
}

TEST(JoinConcept, Examples) {
  EXPECT_EQ(join_concept(Strings{"intravenous", "fluid"}), "intravenous_fluid");
  EXPECT_EQ(join_concept(Strings{"sodium"}), "sodium");
  EXPECT_EQ(join_concept(Strings{"in", "vitro", "fertilization"}), "in_vitro_fertilization");
}

TEST(JoinConcept, EmptyIsError) { EXPECT_THROW(join_concept(Strings{}), InvalidArgument); }

TEST(Document, SentenceSplitting) {
  const auto d = Document::from_text("x", "A b. C d e!\nf? . g");
  ASSERT_EQ(d.sentences.size(), 4u);
  EXPECT_EQ(d.sentences[0], (SentenceBounds{0, 2}));
  EXPECT_EQ(d.sentences[1], (SentenceBounds{2, 5}));
  EXPECT_EQ(d.sentences[2], (SentenceBounds{5, 6}));
  EXPECT_EQ(d.sentences[3], (SentenceBounds{6, 7}));
  EXPECT_EQ(d.sentence_of(4), 1u);
  EXPECT_EQ(d.sentence_of(6), 3u);
}

TEST(Document, BoundsInvariant) {
  Rng rng(11);
  const std::string alphabet = "ab .!?\n";
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    for (std::size_t i = 0, n = rng.index(60); i < n; ++i) text += alphabet[rng.index(alphabet.size())];
    const auto d = Document::from_text("x", text);
    std::size_t prev = 0;
    for (const auto& s : d.sentences) {
      EXPECT_LT(s.begin, s.end);
      EXPECT_GE(s.begin, prev);
      EXPECT_LE(s.end, d.tokens.size());
      prev = s.end;
    }
    for (const auto& t : d.tokens) EXPECT_FALSE(t.empty());
  }
}

TEST(Corpus, DuplicateIdRejected) {
  Corpus c;
  c.add(Document::from_text("a", "x"));
  EXPECT_THROW(c.add(Document::from_text("a", "y")), InvalidArgument);
  EXPECT_EQ(c.find("a"), std::optional<std::size_t>(0));
  EXPECT_FALSE(c.find("b"));
}

TEST(Corpus, JsonlRoundTripAndErrors) {
  TempDir dir;
  std::vector<std::pair<std::string, std::string>> docs = {{"d1", "Hello there. Bye"}, {"d2", "x"}};
  write_corpus_jsonl(dir / "c.jsonl", docs);
  const auto c = Corpus::load_jsonl(dir / "c.jsonl");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].tokens, (Strings{"hello", "there", "bye"}));

  abbrx::testing::write_text(dir / "bad.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":5}\n");
  try {
    Corpus::load_jsonl(dir / "bad.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(PhraseIndex, SingleTokenOffsets) {
  const auto c = make_corpus({"a b a"});
  const auto idx = build_phrase_index(c, {{"a"}});
  ASSERT_EQ(idx.count({"a"}), 2u);
  EXPECT_EQ(idx.occurrences({"a"})[0].offset, 0u);
  EXPECT_EQ(idx.occurrences({"a"})[1].offset, 2u);
}

TEST(PhraseIndex, MultiTokenOffsets) {
  const auto c = make_corpus({"a b a b"});
  const auto idx = build_phrase_index(c, {{"a", "b"}});
  ASSERT_EQ(idx.count({"a", "b"}), 2u);
  EXPECT_EQ(idx.occurrences({"a", "b"})[0].offset, 0u);
  EXPECT_EQ(idx.occurrences({"a", "b"})[1].offset, 2u);
}

TEST(PhraseIndex, AbsentPhrase) {
  const auto c = make_corpus({"a b a b"});
  const auto idx = build_phrase_index(c, {{"z"}, {"b", "b"}});
  EXPECT_EQ(idx.count({"z"}), 0u);
  EXPECT_EQ(idx.count({"b", "b"}), 0u);
  EXPECT_TRUE(idx.contains({"z"}));
  EXPECT_FALSE(idx.contains({"q"}));
}

TEST(PhraseIndex, NoCrossSentenceMatchesAndOverlapsKept) {
  const auto c = make_corpus({"x a. b a b c"});
  const auto idx = build_phrase_index(c, {{"a", "b"}, {"a", "b", "c"}, {"b"}});
  ASSERT_EQ(idx.count({"a", "b"}), 1u);  // "a. b" spans a boundary
  EXPECT_EQ(idx.occurrences({"a", "b"})[0], (Occurrence{0, 1, 3}));
  EXPECT_EQ(idx.count({"a", "b", "c"}), 1u);
  EXPECT_EQ(idx.count({"b"}), 2u);
}

TEST(PhraseIndex, MatchesBruteForceOnRandomCorpora) {
  Rng rng(2024);
  const Strings vocab = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> texts;
    for (std::size_t d = 0, nd = 1 + rng.index(4); d < nd; ++d) {
      std::string t;
      for (std::size_t i = 0, n = rng.index(30); i < n; ++i) {
        t += vocab[rng.index(vocab.size())];
        t += rng.bernoulli(0.15) ? ". " : " ";
      }
      texts.push_back(t);
    }
    const auto c = make_corpus(texts);
    std::set<Phrase> phrases;
    for (int p = 0; p < 6; ++p) {
      Phrase ph;
      for (std::size_t k = 0, n = 1 + rng.index(3); k < n; ++k) ph.push_back(vocab[rng.index(vocab.size())]);
      phrases.insert(ph);
    }
    const auto idx = build_phrase_index(c, phrases);
    EXPECT_EQ(idx.entries().size(), phrases.size());
    for (const auto& ph : phrases) {
      const auto got = idx.occurrences(ph);
      EXPECT_EQ(std::vector<Occurrence>(got.begin(), got.end()), brute_force(c, ph));
    }
  }
}

TEST(PhraseIndex, Deterministic) {
  const auto c = make_corpus({"a b c a b", "c a b"});
  const std::set<Phrase> p = {{"a", "b"}, {"c"}};
  EXPECT_EQ(build_phrase_index(c, p).entries(), build_phrase_index(c, p).entries());
}

TEST(JoinKnownPhrases, LongestFirstWithinSentences) {
  const auto c = make_corpus({"in vitro fertilization and in vitro. fertilization"});
  const auto j = join_known_phrases(c, {{"in", "vitro"}, {"in", "vitro", "fertilization"}});
  EXPECT_EQ(j[0].tokens, (Strings{"in_vitro_fertilization", "and", "in_vitro", "fertilization"}));
  EXPECT_EQ(j[0].sentences.size(), 2u);
}

TEST(Idf, Examples) {
  const auto c = make_corpus({"a b", "a c", "a"});
  const auto idf = compute_idf(c);
  EXPECT_DOUBLE_EQ(idf.weight("a"), 1.0);
  EXPECT_NEAR(idf.weight("b"), std::log(4.0 / 2.0) + 1.0, 1e-12);
  EXPECT_NEAR(idf.weight("b"), 1.6931, 1e-4);
  EXPECT_NEAR(idf.weight("zzz"), std::log(4.0) + 1.0, 1e-12);
  EXPECT_EQ(idf.document_count(), 3u);
}

TEST(Idf, EmptyCorpusIsError) { EXPECT_THROW(compute_idf(Corpus{}), InvalidArgument); }

TEST(Idf, MonotoneInDocumentFrequency) {
  Rng rng(5);
  const Strings vocab = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> texts;
    for (std::size_t d = 0, nd = 1 + rng.index(10); d < nd; ++d) {
      std::string t;
      for (std::size_t i = 0, n = 1 + rng.index(6); i < n; ++i) t += vocab[rng.index(vocab.size())] + " ";
      texts.push_back(t);
    }
    const auto c = make_corpus(texts);
    const TokenIndex ti(c);
    const auto idf = compute_idf(c);
    for (const auto& x : vocab)
      for (const auto& y : vocab) {
        if (ti.document_frequency(x) < ti.document_frequency(y)) EXPECT_GT(idf.weight(x), idf.weight(y));
        EXPECT_GT(idf.weight(x), 0.0);
      }
  }
}

TEST(Idf, TsvRoundTrip) {
  TempDir dir;
  const auto idf = compute_idf(make_corpus({"a b", "a c", "d"}));
  idf.save_tsv(dir / "idf.tsv");
  const auto back = IdfTable::load_tsv(dir / "idf.tsv");
  EXPECT_EQ(back.document_count(), idf.document_count());
  ASSERT_EQ(back.size(), idf.size());
  for (const auto& [t, w] : idf.weights()) EXPECT_NEAR(back.weight(t), w, 1e-12);
  // Byte-identical on a second save.
  idf.save_tsv(dir / "idf2.tsv");
  EXPECT_EQ(abbrx::testing::read_text(dir / "idf.tsv"), abbrx::testing::read_text(dir / "idf2.tsv"));
}

TEST(Idf, MalformedTsvReportsLine) {
  TempDir dir;
  abbrx::testing::write_text(dir / "bad.tsv", "#documents\t3\na\t1.0\nb\tnope\n");
  try {
    IdfTable::load_tsv(dir / "bad.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
