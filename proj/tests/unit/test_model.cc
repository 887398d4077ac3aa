#include <doctest.h>

#include <cmath>

#include "helpers.h"
#include "monotrans/model.h"

using namespace monotrans;
using testing::RandomFeats;
using testing::TinyConfig;

TEST_CASE("config validation") {
  ModelConfig c = TinyConfig();
  c.enc_layers = 0;
  CHECK_THROWS_AS(c.Validate(), Error);
  c = TinyConfig();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.Validate(), Error);
  c = TinyConfig();
  c.aux_middle_layer = 5;
  CHECK_THROWS_AS(c.Validate(), Error);
  CHECK_NOTHROW(TinyConfig().Validate());
}

TEST_CASE("zero parameters give uniform outputs") {
  TransducerModel model(TinyConfig(), 3);
  model.Params().SetZero();
  Matrix feats = RandomFeats(5, 4, 1);
  EncoderOutput enc = model.Encode(feats, DropoutSpec{});
  CHECK(enc.h.cwiseAbs().maxCoeff() == 0.0);
  LogLattice lat = model.JointLattice(enc, {0, 2});
  for (double v : lat.Data()) CHECK(v == doctest::Approx(-std::log(4.0)).epsilon(1e-14));
  for (double v : model.IlmLabelLogProbs({1}))
    CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("subsampling shortens the encoder output") {
  ModelConfig c = TinyConfig();
  c.subsample = 2;
  TransducerModel model(c, 3);
  CHECK(model.Encode(RandomFeats(5, 4, 2), DropoutSpec{}).h.rows() == 3);
  CHECK(model.Encode(RandomFeats(4, 4, 2), DropoutSpec{}).h.rows() == 2);
  CHECK_THROWS_AS(model.Encode(RandomFeats(1, 4, 2), DropoutSpec{}), Error);
  CHECK_THROWS_AS(model.Encode(RandomFeats(4, 3, 2), DropoutSpec{}), Error);
}

TEST_CASE("label histories are left padded") {
  TransducerModel model(TinyConfig(), 3);
  const Label bos = 3;
  auto h = model.Histories({0, 1, 2});
  REQUIRE(h.size() == 4);
  CHECK(h[0] == std::vector<Label>{bos, bos});
  CHECK(h[1] == std::vector<Label>{bos, 0});
  CHECK(h[2] == std::vector<Label>{0, 1});
  CHECK(h[3] == std::vector<Label>{1, 2});
  auto seeded = model.Histories({2}, {0, 1});
  CHECK(seeded[0] == std::vector<Label>{0, 1});
  CHECK(seeded[1] == std::vector<Label>{1, 2});
}

TEST_CASE("lattice rows are normalized and match joint cells") {
  TransducerModel model(TinyConfig(), 4);
  Matrix feats = RandomFeats(6, 4, 5);
  EncoderOutput enc = model.Encode(feats, DropoutSpec{});
  LabelSeq target{2, 0, 0};
  LogLattice lat = model.JointLattice(enc, target);
  CHECK(lat.MaxNormalizationError() <= 1e-12);
  Matrix rows = model.JointCells(enc, target, {{2, 1}, {5, 3}});
  for (int v = 0; v < 4; ++v) {
    CHECK(rows(0, v) == doctest::Approx(lat(2, 1, v)).epsilon(1e-14));
    CHECK(rows(1, v) == doctest::Approx(lat(5, 3, v)).epsilon(1e-14));
  }
}

TEST_CASE("internal LM is the zero-encoder joint with blank removed") {
  TransducerModel model(TinyConfig(), 6);
  const LabelSeq history{2, 1};
  std::vector<double> ilm = model.IlmLabelLogProbs(history);
  double mass = 0.0;
  for (double v : ilm) mass += std::exp(v);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  EncoderOutput zero{Matrix::Zero(1, 6), Matrix::Zero(1, 6)};
  Matrix row = model.JointCells(zero, history, {{0, 2}});
  std::vector<double> labels(row.data(), row.data() + 3);
  double norm = std::log(std::exp(labels[0]) + std::exp(labels[1]) + std::exp(labels[2]));
  for (int v = 0; v < 3; ++v) CHECK(ilm[v] == doctest::Approx(labels[v] - norm).epsilon(1e-12));

  // Only the last k labels matter.
  std::vector<double> longer = model.IlmLabelLogProbs({0, 0, 2, 1});
  for (int v = 0; v < 3; ++v) CHECK(longer[v] == ilm[v]);
}

TEST_CASE("dropout masks are reproducible from the seed") {
  TransducerModel model(TinyConfig(), 7);
  Matrix feats = RandomFeats(6, 4, 8);
  DropoutSpec a{true, 11}, b{true, 12};
  Matrix h1 = model.Encode(feats, a).h, h2 = model.Encode(feats, a).h;
  CHECK(h1 == h2);
  CHECK(h1 != model.Encode(feats, b).h);
  CHECK(model.Encode(feats, DropoutSpec{}).h == model.Encode(feats, DropoutSpec{}).h);
  DropoutSpec off{true, 11, 0.0};
  CHECK(model.Encode(feats, off).h == model.Encode(feats, DropoutSpec{}).h);
  DropoutSpec full{true, 11, 1.0};
  CHECK_THROWS_AS(model.Encode(feats, full), Error);
}

TEST_CASE("backward is linear in the upstream gradient") {
  TransducerModel model(TinyConfig(), 9);
  Matrix feats = RandomFeats(5, 4, 10);
  const LabelSeq target{1, 2};
  auto run = [&](double scale) {
    model.Params().ZeroGrad();
    EncoderCache ec;
    EncoderOutput enc = model.Encode(feats, DropoutSpec{}, &ec);
    JointCache jc;
    Matrix rows = model.JointCells(enc, target, {{0, 0}, {3, 1}, {4, 2}}, &jc);
    Matrix d_rows = Matrix::Constant(rows.rows(), rows.cols(), 0.3 * scale);
    d_rows(1, 2) = -1.7 * scale;
    Matrix d_h = Matrix::Zero(enc.h.rows(), enc.h.cols());
    model.JointBackward(jc, d_rows, &d_h);
    model.EncoderBackward(ec, d_h, Matrix());
    std::vector<Matrix> grads;
    for (const auto &p : model.Params()) grads.push_back(p.grad);
    return grads;
  };
  auto g1 = run(1.0), g2 = run(2.0);
  REQUIRE(g1.size() == g2.size());
  double total = 0.0;
  for (size_t i = 0; i < g1.size(); ++i) {
    CHECK((g2[i] - 2.0 * g1[i]).cwiseAbs().maxCoeff() <= 1e-12);
    total += g1[i].cwiseAbs().sum();
  }
  CHECK(total > 0.0);
}

TEST_CASE("auxiliary heads") {
  TransducerModel model(TinyConfig(), 12);
  EncoderOutput enc = model.Encode(RandomFeats(4, 4, 13), DropoutSpec{});
  Matrix lp = model.AuxLogProbs(enc.h, AuxHead::kFinal);
  CHECK(lp.rows() == 4);
  CHECK(lp.cols() == 4);
  for (int t = 0; t < 4; ++t) CHECK(lp.row(t).array().exp().sum() == doctest::Approx(1.0));
  ModelConfig c = TinyConfig();
  c.aux_heads = false;
  TransducerModel bare(c, 12);
  CHECK_THROWS_AS(bare.AuxLogProbs(enc.h, AuxHead::kMiddle), Error);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("ckpt");
  TransducerModel model(TinyConfig(), 14);
  const std::string path = dir.Str() + "/m.ckpt";
  SaveCheckpoint(path, model);
  TransducerModel back = LoadTransducer(path);
  CHECK(back.Config() == model.Config());
  REQUIRE(back.Params().Size() == model.Params().Size());
  for (int i = 0; i < model.Params().Size(); ++i) {
    CHECK(back.Params()[i].name == model.Params()[i].name);
    CHECK(back.Params()[i].value == model.Params()[i].value);
  }
  CtcModel ctc(TinyConfig(), 15);
  SaveCheckpoint(dir.Str() + "/c.ckpt", ctc);
  CHECK_THROWS_AS(LoadTransducer(dir.Str() + "/c.ckpt"), Error);
  CHECK(LoadCtc(dir.Str() + "/c.ckpt").Params()[0].value == ctc.Params()[0].value);
  CHECK_THROWS_AS(LoadTransducer(dir.Str() + "/missing.ckpt"), Error);
}

TEST_CASE("ctc model rows are normalized") {
  CtcModel ctc(TinyConfig(), 16);
  Matrix lp = ctc.LogProbs(RandomFeats(5, 4, 17), DropoutSpec{});
  CHECK(lp.rows() == 5);
  for (int t = 0; t < 5; ++t)
    CHECK(lp.row(t).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
}
