#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "helpers.h"
#include "monotrans/config.h"
#include "monotrans/pipeline.h"

using namespace monotrans;

namespace {

std::string ReadFile(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Config MiniConfig(const std::string &work) {
  Config c = Config::Defaults();
  c.Set("work_dir", work);
  c.Set("data.num_train", "40");
  c.Set("data.num_dev", "8");
  c.Set("data.num_test", "8");
  c.Set("data.vocab", "4");
  c.Set("data.max_len", "5");
  c.Set("data.feat_dim", "6");
  c.Set("model.enc_dim", "12");
  c.Set("model.joint_dim", "12");
  c.Set("model.pred_dim", "6");
  c.Set("ctc.epochs", "2");
  c.Set("stage1.epochs", "1");
  c.Set("stage2.epochs", "1");
  c.Set("stage3.epochs", "1");
  c.Set("stage3.gen_lm_scale", "0.3");
  c.Set("stage3.subset", "0.5");
  c.Set("decode.beam", "4");
  c.Set("stage3.gen_beam", "4");
  return c;
}

struct RunOutput {
  int status = -1;
  std::string text;
};

RunOutput RunCli(const std::string &args) {
  RunOutput out;
  std::string cmd = std::string(MONOTRANS_CLI) + " " + args + " 2>&1";
  FILE *p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 256> buf{};
  while (fgets(buf.data(), buf.size(), p)) out.text += buf.data();
  int raw = pclose(p);
  out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

Dataset EmptyFeatureSet() {
  Dataset d;
  d.feat_dim = 6;
  d.vocab = 4;
  d.utts.push_back({"a", Matrix(0, 6), {1, 2}});
  d.utts.push_back({"b", Matrix(0, 6), {3}});
  return d;
}

}  // namespace

TEST_CASE("config keys and overrides") {
  Config c = Config::Defaults();
  CHECK(c.Int("stage1.epochs") == 20);
  CHECK(c.Double("loss.label_smooth") == 0.2);
  CHECK(c.Bool("model.aux_heads"));
  CHECK(c.DoubleList("tune.lm_grid").size() == 9);
  c.SetAssignment("stage2.epochs=3");
  CHECK(c.Int("stage2.epochs") == 3);
  CHECK_THROWS_AS(c.SetAssignment("stage2.epochs"), Error);
  try {
    c.Set("stage9.epochs", "1");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.code() == "unknown-key");
    CHECK(std::string(e.what()).find("stage2.epochs") != std::string::npos);
  }
  CHECK_THROWS_AS(c.Int("loss.label_smooth"), Error);
}

TEST_CASE("config files") {
  testing::TempDir dir("cfg");
  try {
    Config::Load(dir.Str() + "/absent.cfg");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.code() == "missing-file");
    CHECK(std::string(e.what()).find("absent.cfg") != std::string::npos);
  }
  {
    std::ofstream os(dir.Str() + "/a.cfg");
    os << "#config v1\n# toy\nstage1.epochs = 4\n\ndecode.beam=3\n";
  }
  Config c = Config::Load(dir.Str() + "/a.cfg");
  CHECK(c.Int("stage1.epochs") == 4);
  CHECK(c.Int("decode.beam") == 3);
  std::stringstream written;
  c.Write(written);
  Config back = Config::Defaults();
  back.Merge(written, "memory");
  CHECK(back == c);
  std::stringstream no_header("stage1.epochs = 4\n");
  CHECK_THROWS_AS(Config::Defaults().Merge(no_header, "x"), Error);
  std::stringstream unknown("#config v1\nfoo = 1\n");
  CHECK_THROWS_AS(Config::Defaults().Merge(unknown, "x"), Error);
}

TEST_CASE("work paths") {
  WorkPaths p("w");
  CHECK(p.Data("dev") == "w/data/dev");
  CHECK(p.Best(p.StageDir(2)) == "w/stage2/best.ckpt");
  CHECK(p.NBest("train") == "w/nbest/train.nbest");
  CHECK(p.Alignments("dev") == "w/align/dev.ali");
}

TEST_CASE("batches cover every utterance once") {
  std::vector<int32_t> frames{5, 9, 3, 7, 2, 8, 6, 4};
  auto a = MakeBatches(frames, 10, 3), b = MakeBatches(frames, 10, 3);
  CHECK(a == b);
  std::multiset<size_t> seen;
  for (size_t i = 0; i < a.size(); ++i) {
    int sum = 0;
    for (size_t j : a[i]) {
      seen.insert(j);
      sum += frames[j];
    }
    if (i + 1 < a.size()) CHECK(sum >= 10);
  }
  CHECK(seen == std::multiset<size_t>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("report arithmetic") {
  EvalReport r;
  r.utts.push_back({"a", {1, 2}, Levenshtein<Label>({1, 2}, {1, 2}), 2});
  r.utts.push_back({"b", {0}, Levenshtein<Label>({0}, {0}), 1});
  Aggregate(&r);
  CHECK(r.wer == 0.0);
  CHECK(r.ref_tokens == 3);
  r.utts.push_back({"c", {}, Levenshtein<Label>({3, 3, 1}, {}), 3});
  r.utts.push_back({"d", {2, 2}, Levenshtein<Label>({1}, {2, 2}), 1});
  Aggregate(&r);
  CHECK(r.ref_tokens == 7);
  CHECK(r.totals.del == 3);
  CHECK(r.totals.sub == 1);
  CHECK(r.totals.ins == 1);
  CHECK(r.wer == doctest::Approx(100.0 * 5 / 7));
  CHECK(r.wer == doctest::Approx(r.sub + r.del + r.ins));
}

TEST_CASE("empty hypotheses are all deletions") {
  TransducerModel model(ModelConfigFrom(Config::Defaults(), 4, 6), 1);
  EvalReport r = Evaluate(model, nullptr, EmptyFeatureSet(), DecodeConfig{});
  CHECK(r.wer == 100.0);
  CHECK(r.del == 100.0);
  CHECK(r.ref_tokens == 3);
}

TEST_CASE("scale tuning ties go to the smallest scales") {
  TransducerModel model(ModelConfigFrom(Config::Defaults(), 4, 6), 1);
  NgramLm lm = NgramLm::Train({{"1", "2"}, {"3"}}, 2, 0.5);
  Dataset d = EmptyFeatureSet();
  TuneResult t = TuneScales(model, &lm, d, {0.4, 0.0, 0.2}, {0.3, 0.1}, DecodeConfig{});
  CHECK(t.lm_scale == 0.0);
  CHECK(t.ilm_scale == 0.1);
  CHECK(t.grid.size() == 6);
  TuneResult one = TuneScales(model, &lm, d, {0.4}, {0.0}, DecodeConfig{});
  CHECK(one.lm_scale == 0.4);
  CHECK_THROWS_AS(TuneScales(model, &lm, d, {}, {0.0}, DecodeConfig{}), Error);
}

TEST_CASE("stages refuse to run out of order") {
  testing::TempDir dir("order");
  Config c = MiniConfig(dir.Str());
  for (int stage : {1, 2, 3}) {
    try {
      RunStage(c, stage);
      FAIL("expected an error");
    } catch (const Error &e) {
      CHECK(e.code() == "missing-artifact");
    }
  }
  GenData(c);
  try {
    RunStage(c, 1);
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("align/train.ali") != std::string::npos);
  }
  try {
    RunStage(c, 2);
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("stage1/best.ckpt") != std::string::npos);
  }
}

TEST_CASE("mini pipeline end to end") {
  testing::TempDir dir("mini");
  Config c = MiniConfig(dir.Str());
  WorkPaths p(dir.Str());
  GenData(c);
  TrainLms(c);
  CHECK(std::filesystem::exists(p.Lm()));
  CHECK(LoadLm(p.GenLm()).Order() == 2);
  TrainCtc(c);
  AlignReport ar = Align(c);
  CHECK(ar.aligned + ar.failed == 48);

  SUBCASE("zero epochs keep the initial checkpoint") {
    c.Set("stage1.epochs", "0");
    StageResult r = RunStage(c, 1);
    CHECK(r.best_epoch == 0);
    const std::string dir1 = p.StageDir(1);
    CHECK(ReadFile(p.Best(dir1)) == ReadFile(p.Final(dir1)));
    CHECK(r.epochs.empty());
    CHECK(ReadFile(p.Metrics(dir1)).empty());
    const std::string first = ReadFile(p.Best(dir1));
    RunStage(c, 1);
    CHECK(ReadFile(p.Best(dir1)) == first);
  }
  SUBCASE("all three stages") {
    RunStage(c, 1);
    StageResult s2 = RunStage(c, 2);
    CHECK(s2.epochs.size() == 1);
    CHECK(s2.epochs[0].epoch == 1);
    CHECK_THROWS_AS(RunStage(c, 3), Error);  // no N-best store yet
    NBestBuildReport nb = BuildNBest(c);
    CHECK(nb.selected > 0);
    StageResult s3 = RunStage(c, 3);
    CHECK(s3.risk.size() == 2);
    std::string risk = ReadFile(p.Risk());
    CHECK(std::count(risk.begin(), risk.end(), '\n') == 2);

    TransducerModel m = LoadTransducer(p.Best(p.StageDir(3)));
    Dataset dev = ReadDataset(p.Data("dev"));
    DecodeConfig dc = DecodeConfigFrom(c);
    EvalReport r = Evaluate(m, nullptr, dev, dc);
    EditStats sum;
    int64_t tokens = 0;
    for (const auto &u : r.utts) {
      sum += u.stats;
      tokens += u.ref_tokens;
    }
    CHECK(sum == r.totals);
    CHECK(tokens == r.ref_tokens);
    CHECK(r.wer == doctest::Approx(100.0 * (sum.sub + sum.del + sum.ins) / tokens));
    NgramLm lm = LoadLm(p.Lm());
    TuneResult t = TuneScales(m, &lm, dev, {0.0, 0.3}, {0.0}, dc);
    dc.lm_scale = t.lm_scale;
    CHECK(Evaluate(m, &lm, dev, dc).wer == t.best.wer);
  }
}

TEST_CASE("command line") {
  RunOutput help = RunCli("--help");
  CHECK(help.status == 0);
  CHECK(help.text.find("gen-data") != std::string::npos);
  RunOutput missing = RunCli("gen-data -c /nonexistent/toy.cfg");
  CHECK(missing.status != 0);
  CHECK(missing.text.find("code=missing-file") != std::string::npos);
  CHECK(missing.text.find("/nonexistent/toy.cfg") != std::string::npos);
  RunOutput unknown = RunCli("gen-data -s bogus.key=1");
  CHECK(unknown.status != 0);
  CHECK(unknown.text.find("code=unknown-key") != std::string::npos);
  CHECK(unknown.text.find("data.vocab") != std::string::npos);
  RunOutput order = RunCli("train --stage 2 -s work_dir=/nonexistent/work");
  CHECK(order.status != 0);
  CHECK(order.text.find("code=missing-artifact") != std::string::npos);
  RunOutput grad = RunCli("gradcheck");
  CHECK(grad.status == 0);
  CHECK(grad.text.find("max_rel_error=") != std::string::npos);
  CHECK(grad.text.find("fail") == std::string::npos);
  RunOutput oracle = RunCli("oracle-check --instances 50");
  CHECK(oracle.status == 0);
}
