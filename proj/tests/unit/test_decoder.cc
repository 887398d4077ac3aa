#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.h"
#include "monotrans/decoder.h"

using namespace monotrans;

namespace {

ModelConfig DecodeModel() {
  ModelConfig c = testing::TinyConfig();
  c.vocab_size = 3;
  c.context_k = 1;
  return c;
}

NgramLm LabelLm() {
  return NgramLm::Train({{"0", "1"}, {"1", "2", "0"}, {"2"}, {"0", "0", "1"}, {"2", "1"}}, 2,
                        0.3);
}

}  // namespace

TEST_CASE("mapping") {
  WMapping id;
  CHECK(id.IsIdentity());
  CHECK(id.Apply({3, 0, 12}) == std::vector<std::string>{"3", "0", "12"});
  CHECK(id.Apply({}).empty());
  WMapping lex = WMapping::FromLexicon({{{0, 1}, "ab"}, {{2}, "c"}});
  CHECK(lex.Apply({0, 1}) == std::vector<std::string>{"ab"});
  CHECK(lex.Apply({2, 0, 1}) == std::vector<std::string>{"c", "ab"});
  CHECK(lex.Apply({}).empty());
  CHECK_THROWS_AS(lex.Apply({0}), Error);
  CHECK_THROWS_AS(lex.Apply({1}), Error);
  std::stringstream ss("ab 0 1\nc 2\n");
  CHECK(WMapping::ReadLexicon(ss).Apply({0, 1, 2}) == std::vector<std::string>{"ab", "c"});
  LabelSeq pending;
  std::string word;
  CHECK(lex.Extend(&pending, 0, &word) == WMapping::Step::kPartial);
  CHECK(lex.Extend(&pending, 1, &word) == WMapping::Step::kWord);
  CHECK(word == "ab");
  CHECK(pending.empty());
  CHECK(lex.Extend(&pending, 1, &word) == WMapping::Step::kInvalid);
}

TEST_CASE("decode line format") {
  Hypothesis h;
  h.labels = {2, 0};
  h.transducer = -1.5;
  h.lm = -2.25;
  h.ilm = -0.5;
  h.combined = -2.0;
  CHECK(FormatDecodeLine("dev-00001", 0, h) == "utt dev-00001 0 -2 -1.5 -2.25 -0.5 | 2 0");
  CHECK(FormatDecodeLine("x", 3, Hypothesis{}) == "utt x 3 0 0 0 0 |");
}

TEST_CASE("empty input gives the empty hypothesis") {
  TransducerModel model(DecodeModel(), 1);
  auto hyps = BeamDecode(model, nullptr, Matrix(0, 4), DecodeConfig{});
  REQUIRE(hyps.size() == 1);
  CHECK(hyps[0].labels.empty());
}

TEST_CASE("dominant blank decodes to nothing") {
  TransducerModel model(DecodeModel(), 2);
  int bias = model.Params().Find("joint.out.bias");
  model.Params()[bias].value(0, 3) = 50.0;
  auto hyps = BeamDecode(model, nullptr, testing::RandomFeats(6, 4, 3), DecodeConfig{});
  CHECK(hyps[0].labels.empty());
}

TEST_CASE("hand-computed two-frame scores") {
  ModelConfig c = DecodeModel();
  c.vocab_size = 2;
  TransducerModel model(c, 4);
  model.Params().SetZero();  // every output row uniform over {a, b, blank}
  DecodeConfig dc;
  dc.beam_size = 16;
  dc.n_best = 7;
  dc.ilm_scale = 0.5;
  auto hyps = BeamDecode(model, nullptr, testing::RandomFeats(2, 4, 5), dc);
  REQUIRE(hyps.size() == 7);
  const double l3 = std::log(3.0), l2 = std::log(2.0);
  // Single labels: two alignments each, 2/9, ILM -log 2 once.
  for (int i = 0; i < 2; ++i) {
    CHECK(hyps[i].labels.size() == 1);
    CHECK(hyps[i].transducer == doctest::Approx(std::log(2.0 / 9)).epsilon(1e-14));
    CHECK(hyps[i].ilm == doctest::Approx(-l2).epsilon(1e-14));
    CHECK(hyps[i].combined == doctest::Approx(std::log(2.0 / 9) + 0.5 * l2).epsilon(1e-14));
  }
  // Pairs: one alignment, 1/9, ILM -2 log 2.
  for (int i = 2; i < 6; ++i) {
    CHECK(hyps[i].labels.size() == 2);
    CHECK(hyps[i].transducer == doctest::Approx(-2 * l3).epsilon(1e-14));
    CHECK(hyps[i].combined == doctest::Approx(-2 * l3 + l2).epsilon(1e-14));
  }
  CHECK(hyps[6].labels.empty());
  CHECK(hyps[6].combined == doctest::Approx(-2 * l3).epsilon(1e-14));
}

TEST_CASE("full-width beam equals exhaustive search") {
  NgramLm lm = LabelLm();
  int instances = 0;
  for (uint64_t seed = 0; seed < 12; ++seed)
    for (double l1 : {0.0, 0.5})
      for (double l2 : {0.0, 0.2}) {
        TransducerModel model(DecodeModel(), 100 + seed);
        Matrix feats = testing::RandomFeats(1 + static_cast<int>(seed % 3), 4, 200 + seed);
        DecodeConfig dc;
        dc.lm_scale = l1;
        dc.ilm_scale = l2;
        dc.beam_size = 64;
        Hypothesis ex = ExhaustiveDecode(model, &lm, feats, dc);
        Hypothesis bm = BeamDecode(model, &lm, feats, dc)[0];
        CHECK(bm.labels == ex.labels);
        CHECK(std::abs(bm.combined - ex.combined) <= 1e-9);
        ++instances;
      }
  CHECK(instances == 48);
}

TEST_CASE("exhaustive search on one frame picks the best symbol") {
  TransducerModel model(DecodeModel(), 9);
  Matrix feats = testing::RandomFeats(1, 4, 10);
  EncoderOutput enc = model.Encode(feats, DropoutSpec{});
  Matrix row = model.JointCells(enc, {}, {{0, 0}});
  Eigen::Index best;
  row.row(0).maxCoeff(&best);
  Hypothesis h = ExhaustiveDecode(model, nullptr, feats, DecodeConfig{});
  if (best == 3)
    CHECK(h.labels.empty());
  else
    CHECK(h.labels == LabelSeq{static_cast<Label>(best)});
  CHECK(h.transducer == doctest::Approx(row(0, best)).epsilon(1e-14));
  CHECK_THROWS_AS(ExhaustiveDecode(model, nullptr, testing::RandomFeats(12, 4, 1),
                                   DecodeConfig{}),
                  Error);
}

TEST_CASE("zero LM scale ignores the LM") {
  TransducerModel model(DecodeModel(), 11);
  Matrix feats = testing::RandomFeats(7, 4, 12);
  NgramLm a = LabelLm(), b = NgramLm::Train({{"2", "2"}}, 3, 0.1);
  DecodeConfig dc;
  dc.n_best = 4;
  auto ha = BeamDecode(model, &a, feats, dc), hb = BeamDecode(model, &b, feats, dc),
       hn = BeamDecode(model, nullptr, feats, dc);
  REQUIRE(ha.size() == hb.size());
  for (size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].labels == hb[i].labels);
    CHECK(ha[i].combined == hb[i].combined);
    CHECK(ha[i].combined == hn[i].combined);
    CHECK(ha[i].lm == 0.0);
  }
  dc.lm_scale = 0.3;
  CHECK_THROWS_AS(BeamDecode(model, nullptr, feats, dc), Error);
}

TEST_CASE("best score does not drop as the beam widens") {
  NgramLm lm = LabelLm();
  for (uint64_t seed = 0; seed < 10; ++seed) {
    TransducerModel model(DecodeModel(), 300 + seed);
    Matrix feats = testing::RandomFeats(8, 4, 400 + seed);
    DecodeConfig dc;
    dc.lm_scale = 0.4;
    dc.ilm_scale = 0.1;
    double prev = -1e300;
    for (int beam : {1, 2, 4, 8, 16, 32}) {
      dc.beam_size = beam;
      double best = BeamDecode(model, &lm, feats, dc)[0].combined;
      CHECK(best >= prev - 1e-12);
      prev = best;
    }
  }
}

TEST_CASE("score bookkeeping") {
  NgramLm lm = LabelLm();
  TransducerModel model(DecodeModel(), 13);
  // 4^3 alignments: a 64-wide beam never prunes.
  Matrix feats = testing::RandomFeats(3, 4, 14);
  DecodeConfig plain, ilm;
  plain.beam_size = ilm.beam_size = 64;
  plain.n_best = ilm.n_best = 5;
  plain.lm_scale = ilm.lm_scale = 0.4;
  ilm.ilm_scale = 0.3;
  auto a = BeamDecode(model, &lm, feats, plain);
  auto b = BeamDecode(model, &lm, feats, ilm);
  for (const auto &h : b) {
    CHECK(h.combined == doctest::Approx(h.transducer + 0.4 * h.lm - 0.3 * h.ilm).epsilon(1e-12));
    CHECK(h.lm == doctest::Approx(lm.Score(WMapping().Apply(h.labels))).epsilon(1e-12));
    double ilm_sum = 0.0;
    for (size_t i = 0; i < h.labels.size(); ++i) {
      LabelSeq hist(h.labels.begin(), h.labels.begin() + i);
      ilm_sum += model.IlmLabelLogProbs(hist)[h.labels[i]];
    }
    CHECK(h.ilm == doctest::Approx(ilm_sum).epsilon(1e-12));
    for (const auto &p : a)
      if (p.labels == h.labels)
        CHECK(p.transducer == doctest::Approx(h.transducer).epsilon(1e-12));
  }
}
