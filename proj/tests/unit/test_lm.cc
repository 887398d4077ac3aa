#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "monotrans/lm.h"

using namespace monotrans;
using Sentence = NgramLm::Sentence;

namespace {

// Independent count-and-divide model: absolute discounting, unigram leftover
// mass to <unk>, backoff weights renormalizing over unseen followers.
class CountingOracle {
 public:
  CountingOracle(const std::vector<Sentence> &corpus, int order, double d)
      : order_(order), d_(d) {
    for (const auto &s : corpus) {
      std::vector<std::string> w{"<s>"};
      w.insert(w.end(), s.begin(), s.end());
      w.push_back("</s>");
      for (size_t end = 1; end < w.size(); ++end)
        for (int n = 1; n <= order && static_cast<int>(end) + 1 >= n; ++n) {
          std::vector<std::string> g(w.begin() + (end + 1 - n), w.begin() + end + 1);
          ++count_[g];
          std::vector<std::string> h(g.begin(), g.end() - 1);
          ++hist_total_[h];
          followers_[h].insert(g.back());
        }
    }
  }

  double Prob(std::vector<std::string> ctx, const std::string &w) const {
    if (static_cast<int>(ctx.size()) > order_ - 1)
      ctx.erase(ctx.begin(), ctx.end() - (order_ - 1));
    if (ctx.empty()) {
      double n = hist_total_.at({});
      if (w == "<unk>") return d_ * followers_.at({}).size() / n;
      auto it = count_.find({w});
      return it == count_.end() ? 0.0 : (it->second - d_) / n;
    }
    std::vector<std::string> lower(ctx.begin() + 1, ctx.end());
    auto ht = hist_total_.find(ctx);
    if (ht == hist_total_.end()) return Prob(lower, w);
    std::vector<std::string> g = ctx;
    g.push_back(w);
    auto it = count_.find(g);
    if (it != count_.end()) return (it->second - d_) / ht->second;
    double kept = 0.0, lower_seen = 0.0;
    for (const auto &f : followers_.at(ctx)) {
      std::vector<std::string> fg = ctx;
      fg.push_back(f);
      kept += (count_.at(fg) - d_) / ht->second;
      lower_seen += Prob(lower, f);
    }
    if (1.0 - kept <= 0.0) return 0.0;
    return (1.0 - kept) / (1.0 - lower_seen) * Prob(lower, w);
  }

  double Score(const Sentence &s, const std::set<std::string> &vocab) const {
    std::vector<std::string> ctx{"<s>"};
    double total = 0.0;
    for (auto w : s) {
      if (!vocab.count(w)) w = "<unk>";
      total += std::log(Prob(ctx, w));
      ctx.push_back(w);
    }
    return total + std::log(Prob(ctx, "</s>"));
  }

 private:
  int order_;
  double d_;
  std::map<std::vector<std::string>, double> count_, hist_total_;
  std::map<std::vector<std::string>, std::set<std::string>> followers_;
};

std::vector<Sentence> SeededCorpus(uint64_t seed, int sentences, int vocab) {
  std::mt19937_64 rng(seed);
  std::vector<Sentence> out;
  for (int i = 0; i < sentences; ++i) {
    Sentence s;
    int len = static_cast<int>(rng() % 6);
    std::string prev = "w0";
    for (int j = 0; j < len; ++j) {
      // Skewed bigram-ish source so that higher orders matter.
      int v = (rng() % 3 == 0) ? static_cast<int>(rng() % vocab)
                               : (std::stoi(prev.substr(1)) + 1) % vocab;
      prev = "w" + std::to_string(v);
      s.push_back(prev);
    }
    out.push_back(s);
  }
  return out;
}

double Normalization(const NgramLm &lm, const std::vector<int> &ctx) {
  double mass = 0.0;
  for (int w = 0; w < lm.VocabSize(); ++w) mass += std::exp(lm.LogProb(ctx, w));
  return mass;
}

}  // namespace

TEST_CASE("deterministic bigram") {
  std::vector<Sentence> corpus(5, Sentence{"a", "b"});
  NgramLm lm = NgramLm::Train(corpus, 2, 0.0);
  CHECK(lm.LogProb({lm.Id("a")}, lm.Id("b")) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(lm.Score({"a", "b"}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("uniform unigram") {
  std::vector<Sentence> corpus(3, Sentence{"a", "b", "c"});
  NgramLm lm = NgramLm::Train(corpus, 1, 0.0);
  for (const char *w : {"a", "b", "c", "</s>"})
    CHECK(lm.LogProb({}, lm.Id(w)) == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(NgramLm::Train({{"a"}}, 0, 0.5), Error);
  CHECK_THROWS_AS(NgramLm::Train({}, 2, 0.5), Error);
  CHECK_THROWS_AS(NgramLm::Train({{"a"}}, 2, 1.0), Error);
  CHECK_THROWS_AS(NgramLm::Train({{"<s>"}}, 2, 0.5), Error);
}

TEST_CASE("hand-computed trigram backoff chain") {
  // <s> a b </s>, <s> a c </s>, <s> b c </s> with discount 0.5:
  //   P(a) = 1.5/9, backoff(b) = 0.5 / (1 - 4/9) = 0.9, P(a|b) = 0.15
  //   P(c|<s> b) = 0.5, backoff(<s> b) = 0.5 / (1 - 0.25) = 2/3
  //   P(a|<s> b) = 2/3 * 0.15 = 0.1
  NgramLm lm = NgramLm::Train({{"a", "b"}, {"a", "c"}, {"b", "c"}}, 3, 0.5);
  const int bos = NgramLm::kBos, a = lm.Id("a"), b = lm.Id("b"), c = lm.Id("c");
  CHECK(std::exp(lm.LogProb({}, a)) == doctest::Approx(1.5 / 9).epsilon(1e-12));
  CHECK(std::exp(lm.LogProb({}, NgramLm::kUnk)) == doctest::Approx(2.0 / 9).epsilon(1e-12));
  CHECK(std::exp(lm.LogProb({b}, a)) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::exp(lm.LogProb({bos, b}, c)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::exp(lm.LogProb({bos, b}, a)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(std::exp(lm.LogProb({bos}, a)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("score is the sum of stepwise conditionals") {
  NgramLm lm = NgramLm::Train(SeededCorpus(3, 50, 5), 3, 0.5);
  CHECK(lm.Score({}) == lm.LogProb({NgramLm::kBos}, NgramLm::kEos));
  Sentence s{"w1", "w2", "w9", "w3"};
  std::vector<int> ctx{NgramLm::kBos};
  double sum = 0.0;
  for (const auto &w : s) {
    sum += lm.LogProb(ctx, lm.Id(w));
    ctx.push_back(lm.Id(w));
  }
  sum += lm.LogProb(ctx, NgramLm::kEos);
  CHECK(lm.Score(s) == sum);
  CHECK(lm.Id("w9") == NgramLm::kUnk);
}

TEST_CASE("matches the counting oracle on held-out text") {
  auto train = SeededCorpus(11, 100, 6);
  auto held = SeededCorpus(12, 40, 8);
  for (int order : {1, 2, 3}) {
    NgramLm lm = NgramLm::Train(train, order, 0.4);
    CountingOracle oracle(train, order, 0.4);
    std::set<std::string> vocab;
    for (int i = 3; i < lm.VocabSize(); ++i) vocab.insert(lm.Word(i));
    double lp = 0.0, ref = 0.0;
    size_t tokens = 0;
    for (const auto &s : held) {
      double a = lm.Score(s), b = oracle.Score(s, vocab);
      CHECK(std::abs(a - b) <= 1e-9);
      lp += a;
      ref += b;
      tokens += s.size() + 1;
    }
    double ppl = std::exp(-lp / tokens), ppl_ref = std::exp(-ref / tokens);
    CHECK(std::abs(ppl - ppl_ref) <= 1e-9 * ppl_ref);
  }
}

TEST_CASE("every context is normalized") {
  for (int order : {1, 2, 3, 4}) {
    NgramLm lm = NgramLm::Train(SeededCorpus(21, 100, 6), order, 0.5);
    auto contexts = lm.Contexts();
    CHECK(!contexts.empty());
    for (const auto &ctx : contexts) CHECK(std::abs(Normalization(lm, ctx) - 1.0) <= 1e-9);
    // Unseen histories back off all the way.
    CHECK(std::abs(Normalization(lm, {NgramLm::kUnk, NgramLm::kUnk}) - 1.0) <= 1e-9);
  }
}

TEST_CASE("lower orders never assign zero to in-vocabulary text") {
  auto corpus = SeededCorpus(31, 60, 6);
  std::mt19937_64 rng(5);
  for (int order : {1, 2}) {
    NgramLm lm = NgramLm::Train(corpus, order, 0.5);
    for (int i = 0; i < 100; ++i) {
      Sentence s;
      for (int j = 0, n = static_cast<int>(rng() % 7); j < n; ++j)
        s.push_back("w" + std::to_string(rng() % 6));
      CHECK(std::isfinite(lm.Score(s)));
    }
  }
}

TEST_CASE("ARPA round trip") {
  NgramLm lm = NgramLm::Train(SeededCorpus(41, 80, 6), 3, 0.5);
  std::stringstream ss;
  lm.WriteArpa(ss);
  const std::string text = ss.str();
  CHECK(text.rfind("\\data\\\nngram 1=", 0) == 0);
  NgramLm back = NgramLm::ReadArpa(ss);
  CHECK(back == lm);
  std::stringstream again;
  back.WriteArpa(again);
  CHECK(again.str() == text);
  CHECK(back.Score({"w1", "w2"}) == lm.Score({"w1", "w2"}));
  std::stringstream bad("ngram 1=2\n");
  CHECK_THROWS_AS(NgramLm::ReadArpa(bad), Error);
}
