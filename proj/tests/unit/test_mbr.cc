#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.h"
#include "monotrans/mbr.h"

using namespace monotrans;

namespace {

NBestEntry Entry(LabelSeq labels, double m, double l, double risk = 0.0, bool ref = false) {
  NBestEntry e;
  e.labels = std::move(labels);
  e.model_logprob = m;
  e.lm_logprob = l;
  e.risk = risk;
  e.is_reference = ref;
  return e;
}

std::vector<NBestEntry> RandomEntries(std::mt19937_64 &rng, int n) {
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<NBestEntry> out;
  for (int i = 0; i < n; ++i)
    out.push_back(Entry({static_cast<Label>(i)}, -std::abs(g(rng)) - 1.0, -std::abs(g(rng)),
                        static_cast<double>(rng() % 5)));
  return out;
}

}  // namespace

TEST_CASE("edit distance decomposition") {
  using S = std::vector<char>;
  CHECK(Levenshtein(S{'a', 'b', 'c'}, S{'a', 'x', 'b', 'c'}) == EditStats{1, 0, 0, 1});
  CHECK(Levenshtein(S{'a', 'b', 'c'}, S{'a', 'c'}) == EditStats{1, 0, 1, 0});
  CHECK(Levenshtein(S{'a', 'b'}, S{'c', 'd'}) == EditStats{2, 2, 0, 0});
  CHECK(Levenshtein(S{'a', 'b', 'c'}, S{}) == EditStats{3, 0, 3, 0});
  CHECK(Levenshtein(S{}, S{'x', 'y'}) == EditStats{2, 0, 0, 2});
  CHECK(Levenshtein(S{'a', 'b'}, S{'a', 'b'}) == EditStats{});
  // Components always add up to the distance.
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> r(rng() % 6), h(rng() % 6);
    for (auto &x : r) x = static_cast<int>(rng() % 3);
    for (auto &x : h) x = static_cast<int>(rng() % 3);
    EditStats st = Levenshtein(r, h);
    CHECK(st.sub + st.del + st.ins == st.distance);
    CHECK(st.del - st.ins == static_cast<int64_t>(r.size()) - static_cast<int64_t>(h.size()));
    CHECK(st.distance == Levenshtein(h, r).distance);
  }
}

TEST_CASE("expected risk of a two-entry list") {
  std::vector<NBestEntry> e{Entry({0}, std::log(0.75), 0.0, 1.0),
                            Entry({1}, std::log(0.25), 0.0, 3.0)};
  MbrScales s;
  s.lm_scale = 1.0;
  MbrResult r = MbrLoss(e, s);
  CHECK(r.loss == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(r.posteriors[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(r.d_model[0] == doctest::Approx(0.75 * (1.0 - 1.5)));
  CHECK(r.d_model[1] == doctest::Approx(0.25 * (3.0 - 1.5)));
}

TEST_CASE("posteriors scale model and LM scores") {
  std::vector<NBestEntry> e{Entry({0}, -1.0, -2.0), Entry({1}, -1.5, -0.5)};
  MbrScales s;
  s.lm_scale = 0.5;  // beta defaults to 2
  auto p = SeqPosteriors(e, s);
  double a = 2.0 * (-1.0 + 0.5 * -2.0), b = 2.0 * (-1.5 + 0.5 * -0.5);
  CHECK(p[0] == doctest::Approx(std::exp(a) / (std::exp(a) + std::exp(b))).epsilon(1e-14));
  s.beta = 1.0;
  CHECK(s.Beta() == 1.0);
}

TEST_CASE("gradient properties over random lists") {
  std::mt19937_64 rng(9);
  MbrScales s;
  s.lm_scale = 0.7;
  for (int trial = 0; trial < 200; ++trial) {
    auto e = RandomEntries(rng, 1 + static_cast<int>(rng() % 6));
    MbrResult r = MbrLoss(e, s);
    double sum = 0.0, lo = 1e9, hi = -1e9, pmass = 0.0;
    for (size_t i = 0; i < e.size(); ++i) {
      sum += r.d_model[i];
      pmass += r.posteriors[i];
      lo = std::min(lo, e[i].risk);
      hi = std::max(hi, e[i].risk);
    }
    CHECK(std::abs(sum) <= 1e-12);
    CHECK(pmass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.loss >= lo - 1e-12);
    CHECK(r.loss <= hi + 1e-12);
    auto shifted = e;
    for (auto &x : shifted) x.model_logprob += 3.25;
    CHECK(std::abs(MbrLoss(shifted, s).loss - r.loss) <= 1e-12);
    const double h = 1e-6;
    for (size_t i = 0; i < e.size(); ++i) {
      auto up = e, down = e;
      up[i].model_logprob += h;
      down[i].model_logprob -= h;
      double numeric = (MbrLoss(up, s).loss - MbrLoss(down, s).loss) / (2 * h);
      CHECK(std::abs(numeric - r.d_model[i]) <= 1e-6);
    }
  }
}

TEST_CASE("large beta concentrates on the best entry") {
  std::vector<NBestEntry> e{Entry({0}, -3.0, -1.0, 2.0), Entry({1}, -2.0, -1.0, 1.0),
                            Entry({2}, -2.5, -1.0, 0.0)};
  MbrScales s;
  s.lm_scale = 1.0;
  s.beta = 1e3;
  MbrResult r = MbrLoss(e, s);
  CHECK(r.posteriors[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("infeasible entries get zero posterior") {
  std::vector<NBestEntry> e{Entry({0}, -1.0, -1.0, 2.0), Entry({1}, kLogZero, -1.0, 5.0)};
  MbrScales s;
  MbrResult r = MbrLoss(e, s);
  CHECK(r.posteriors[1] == 0.0);
  CHECK(r.d_model[1] == 0.0);
  CHECK(r.loss == doctest::Approx(2.0));
  CHECK_THROWS_AS(MbrLoss({}, s), Error);
}

TEST_CASE("scale validation") {
  MbrScales s;
  s.lm_scale = 0.0;
  CHECK_THROWS_AS(s.Validate(), Error);
  s.beta = 2.0;
  CHECK_NOTHROW(s.Validate());
  s.fs_aux_scale = -1.0;
  CHECK_THROWS_AS(s.Validate(), Error);
}

TEST_CASE("list validation and top-N selection") {
  NBestList list;
  list.utt_id = "u";
  list.entries = {Entry({0}, 0, 0), Entry({1}, 0, 0), Entry({2}, 0, 0), Entry({0, 1}, 0, 0),
                  Entry({1, 2}, 0, 0, 0.0, true)};
  list.ref_index = 4;
  CHECK_NOTHROW(list.Validate());
  NBestList top = SelectTopN(list, 3);
  REQUIRE(top.entries.size() == 3);
  CHECK(top.ref_index == 2);
  CHECK(top.entries[2].labels == LabelSeq{1, 2});
  CHECK(top.entries[1].labels == LabelSeq{1});
  CHECK(SelectTopN(list, 10).entries.size() == 5);

  NBestList dup = list;
  dup.entries[1].labels = {0};
  CHECK_THROWS_AS(dup.Validate(), Error);
  NBestList noref = list;
  noref.entries[4].is_reference = false;
  CHECK_THROWS_AS(noref.Validate(), Error);
  NBestList wrong = list;
  wrong.ref_index = 1;
  CHECK_THROWS_AS(wrong.Validate(), Error);
}

TEST_CASE("risks against the reference") {
  NBestList list;
  list.entries = {Entry({0, 1, 2}, 0, 0, 0, true), Entry({0, 2}, 0, 0), Entry({}, 0, 0)};
  list.ref_index = 0;
  ComputeRisks(&list);
  CHECK(list.entries[0].risk == 0.0);
  CHECK(list.entries[1].risk == 1.0);
  CHECK(list.entries[2].risk == 3.0);
  WMapping lex = WMapping::FromLexicon({{{0, 1}, "x"}, {{2}, "y"}, {{1}, "z"}});
  NBestList words = list;
  words.entries[1].labels = {0, 1};
  ComputeRisks(&words, lex);
  CHECK(words.entries[1].risk == 1.0);  // [x y] vs [x]
}

TEST_CASE("N-best store round trip") {
  NBestStore store;
  store.n = 4;
  store.lambda1 = 0.3;
  store.seed = 7;
  for (int u = 0; u < 3; ++u) {
    NBestList l;
    l.utt_id = "train-0000" + std::to_string(u);
    l.entries = {Entry({1, 2}, kLogZero, -3.0 - u), Entry({}, kLogZero, -0.1234567890123),
                 Entry({2, 2, 0}, kLogZero, -7.5, 0, true)};
    l.ref_index = 2;
    store.lists.push_back(l);
  }
  std::stringstream ss;
  WriteNBestStore(ss, store);
  const std::string text = ss.str();
  CHECK(text.rfind("#nbest v1 N=4 lambda1=0.3 seed=7\n", 0) == 0);
  NBestStore back = ReadNBestStore(ss);
  CHECK(back.n == 4);
  CHECK(back.lambda1 == 0.3);
  CHECK(back.seed == 7);
  REQUIRE(back.lists.size() == 3);
  CHECK(back.lists[1].entries[1].lm_logprob == -0.1234567890123);
  CHECK(back.lists[1].entries[0].risk == 2.0);
  CHECK(back.lists[1].ref_index == 2);
  std::stringstream again;
  WriteNBestStore(again, back);
  CHECK(again.str() == text);

  std::stringstream bad("#nbest v1 N=4 lambda1=0.3 seed=7\nutt a 2\nhyp -1 1 0\nhyp -2 1 0\n");
  CHECK_THROWS_AS(ReadNBestStore(bad), Error);
}

TEST_CASE("subset selection is seeded") {
  auto a = SelectSubset(10, 0.25, 7), b = SelectSubset(10, 0.25, 7);
  CHECK(a == b);
  CHECK(a.size() == 3);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(SelectSubset(10, 1.0, 3).size() == 10);
  CHECK(SelectSubset(0, 0.5, 3).empty());
  bool differs = false;
  for (uint64_t s = 8; s < 20 && !differs; ++s) differs = SelectSubset(10, 0.25, s) != a;
  CHECK(differs);
}

TEST_CASE("stage-3 criterion leaves gradients alone without backward") {
  TransducerModel model(testing::TinyConfig(), 3);
  Matrix feats = testing::RandomFeats(6, 4, 4);
  NBestList list;
  list.utt_id = "u";
  list.entries = {Entry({0, 2}, kLogZero, -2.1, 1.0), Entry({0, 1, 2}, kLogZero, -3.4, 0, true),
                  Entry({0, 1, 2, 0, 1, 2, 0}, kLogZero, -9.0, 4.0)};
  list.ref_index = 1;
  MbrScales s;
  s.lm_scale = 0.5;
  model.Params().ZeroGrad();
  Stage3Parts p = Stage3Utterance(&model, feats, &list, s, 1.0, false);
  CHECK(model.Params().GradNorm() == 0.0);
  CHECK(list.entries[2].model_logprob == kLogZero);
  CHECK(std::isfinite(p.mbr));
  CHECK(p.fs == doctest::Approx(-list.entries[1].model_logprob));
  Stage3Utterance(&model, feats, &list, s, 1.0, true);
  CHECK(model.Params().GradNorm() > 0.0);
}
