// monotrans command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "monotrans/config.h"
#include "monotrans/oracle.h"
#include "monotrans/pipeline.h"

using namespace monotrans;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;

  Config Build() const {
    Config cfg = config_path.empty() ? Config::Defaults() : Config::Load(config_path);
    for (const auto &o : overrides) cfg.SetAssignment(o);
    return cfg;
  }
};

void AddCommon(CLI::App *sub, Common *c) {
  sub->add_option("-c,--config", c->config_path, "config file (#config v1)");
  sub->add_option("-s,--set", c->overrides, "override, key=value (repeatable)");
  sub->add_flag("-q,--quiet", c->quiet, "only warnings and errors");
}

std::string StageCheckpoint(const Config &cfg, int stage, const std::string &explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  WorkPaths paths(cfg.Str("work_dir"));
  return paths.Best(paths.StageDir(stage));
}

void PrintReport(const EvalReport &r) {
  std::printf("eval wer=%.4f sub=%.4f del=%.4f ins=%.4f ref_tokens=%lld "
              "errors=%lld lm_scale=%s ilm_scale=%s\n",
              r.wer, r.sub, r.del, r.ins, static_cast<long long>(r.ref_tokens),
              static_cast<long long>(r.totals.sub + r.totals.del + r.totals.ins),
              FormatExact(r.lm_scale).c_str(), FormatExact(r.ilm_scale).c_str());
}

void WriteDetails(const std::string &path, const EvalReport &r) {
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot write " + path);
  for (const auto &u : r.utts) {
    os << u.id << '\t' << u.ref_tokens << '\t' << u.stats.sub << '\t' << u.stats.del
       << '\t' << u.stats.ins << '\t' << JoinLabels(u.hyp) << '\n';
  }
}

const NgramLm *MaybeLm(const Config &cfg, double lm_scale, NgramLm *storage) {
  if (lm_scale == 0.0) return nullptr;
  *storage = LoadLm(WorkPaths(cfg.Str("work_dir")).Lm());
  return storage;
}

Dataset LoadEvalSplit(const Config &cfg, const std::string &split) {
  return ReadDataset(WorkPaths(cfg.Str("work_dir")).Data(split));
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"monotrans: monotonic transducer training toolkit"};
  app.require_subcommand(1);
  Common common;

  auto *gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  auto *lm = app.add_subcommand("train-lm", "train the n-gram LMs on train transcripts");
  auto *ctc = app.add_subcommand("train-ctc", "train the CTC alignment model");
  auto *align = app.add_subcommand("align", "forced-align train and dev with CTC");
  auto *train = app.add_subcommand("train", "train a transducer stage");
  int stage = 1;
  train->add_option("--stage", stage, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
  auto *nbest = app.add_subcommand("build-nbest", "static N-best stores for stage 3");

  std::string checkpoint, split = "dev", details;
  int from_stage = 2, n_best = 1;
  double lm_scale = 0.0, ilm_scale = 0.0;
  bool have_lm = false, have_ilm = false;
  auto *decode = app.add_subcommand("decode", "decode a split, one line per hypothesis");
  auto *evaluate = app.add_subcommand("evaluate", "decode and score a split");
  auto *tune = app.add_subcommand("tune-scales", "grid search over LM/ILM scales");
  for (auto *sub : {decode, evaluate, tune}) {
    sub->add_option("--checkpoint", checkpoint, "transducer checkpoint");
    sub->add_option("--from-stage", from_stage, "use work/stageN/best.ckpt")
        ->check(CLI::Range(1, 3));
    sub->add_option("--split", split, "train, dev or test");
  }
  for (auto *sub : {decode, evaluate}) {
    sub->add_option("--lm-scale", lm_scale, "overrides decode.lm_scale")
        ->each([&](const std::string &) { have_lm = true; });
    sub->add_option("--ilm-scale", ilm_scale, "overrides decode.ilm_scale")
        ->each([&](const std::string &) { have_ilm = true; });
  }
  decode->add_option("--n-best", n_best, "hypotheses per utterance");
  evaluate->add_option("--details", details, "per-utterance TSV output");

  uint64_t seed = 1;
  int instances = 200;
  auto *grad = app.add_subcommand("gradcheck", "finite-difference gradient sweep");
  grad->add_option("--seed", seed, "model seed");
  auto *oracle = app.add_subcommand("oracle-check", "dynamic programs vs enumeration");
  oracle->add_option("--seed", seed, "instance seed");
  oracle->add_option("--instances", instances, "instances per check");

  for (auto *sub : app.get_subcommands({})) AddCommon(sub, &common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }
  if (common.quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*grad) {
      bool ok = true;
      for (const auto &r : RunToyGradchecks(seed)) {
        std::printf("gradcheck %s params=%lld checked=%lld max_rel_error=%.3e worst=%s %s\n",
                    r.name.c_str(), static_cast<long long>(r.num_params),
                    static_cast<long long>(r.report.checked), r.report.max_rel_error,
                    r.report.worst.c_str(), r.report.Passed() ? "pass" : "fail");
        ok = ok && r.report.Passed();
      }
      return ok ? 0 : 1;
    }
    if (*oracle) {
      OracleSweep fsw = SweepTransducerOracle(instances, seed);
      OracleSweep csw = SweepCtcOracle(instances, seed + 1);
      bool ok = fsw.max_abs_error <= 1e-9 && csw.max_abs_error <= 1e-9;
      std::printf("oracle fullsum instances=%d max_abs_error=%.3e %s\n", fsw.instances,
                  fsw.max_abs_error, fsw.max_abs_error <= 1e-9 ? "pass" : "fail");
      std::printf("oracle ctc instances=%d max_abs_error=%.3e %s\n", csw.instances,
                  csw.max_abs_error, csw.max_abs_error <= 1e-9 ? "pass" : "fail");
      return ok ? 0 : 1;
    }

    Config cfg = common.Build();
    if (*gen) {
      GenData(cfg);
    } else if (*lm) {
      TrainLms(cfg);
    } else if (*ctc) {
      StageResult r = TrainCtc(cfg);
      std::printf("ctc best_epoch=%d dev_loss=%s\n", r.best_epoch,
                  FormatExact(r.best_score).c_str());
    } else if (*align) {
      AlignReport r = Align(cfg);
      std::printf("align aligned=%d failed=%d\n", r.aligned, r.failed);
    } else if (*train) {
      StageResult r = RunStage(cfg, stage);
      std::printf("stage%d best_epoch=%d dev_score=%s\n", stage, r.best_epoch,
                  FormatExact(r.best_score).c_str());
    } else if (*nbest) {
      NBestBuildReport r = BuildNBest(cfg);
      std::printf("nbest candidates=%d selected=%d failed=%d\n", r.candidates,
                  r.selected, r.failed);
    } else {
      TransducerModel model = LoadTransducer(StageCheckpoint(cfg, from_stage, checkpoint));
      Dataset data = LoadEvalSplit(cfg, split);
      DecodeConfig dc = DecodeConfigFrom(cfg);
      if (have_lm) dc.lm_scale = lm_scale;
      if (have_ilm) dc.ilm_scale = ilm_scale;
      NgramLm lm_storage;
      if (*decode) {
        dc.n_best = n_best;
        const NgramLm *lm_ptr = MaybeLm(cfg, dc.lm_scale, &lm_storage);
        for (const auto &u : data.utts) {
          auto hyps = BeamDecode(model, lm_ptr, u.feats, dc);
          for (size_t i = 0; i < hyps.size(); ++i)
            std::printf("%s\n", FormatDecodeLine(u.id, static_cast<int>(i), hyps[i]).c_str());
        }
      } else if (*evaluate) {
        EvalReport r = Evaluate(model, MaybeLm(cfg, dc.lm_scale, &lm_storage), data, dc);
        PrintReport(r);
        if (!details.empty()) WriteDetails(details, r);
      } else if (*tune) {
        auto lm_grid = cfg.DoubleList("tune.lm_grid");
        bool any_lm = false;
        for (double v : lm_grid) any_lm = any_lm || v != 0.0;
        const NgramLm *lm_ptr = MaybeLm(cfg, any_lm ? 1.0 : 0.0, &lm_storage);
        TuneResult t = TuneScales(model, lm_ptr, data, lm_grid,
                                  cfg.DoubleList("tune.ilm_grid"), dc);
        for (const auto &p : t.grid)
          std::printf("grid lm_scale=%s ilm_scale=%s wer=%.4f\n",
                      FormatExact(p.lm_scale).c_str(), FormatExact(p.ilm_scale).c_str(),
                      p.wer);
        std::printf("best lm_scale=%s ilm_scale=%s\n", FormatExact(t.lm_scale).c_str(),
                    FormatExact(t.ilm_scale).c_str());
        PrintReport(t.best);
      }
    }
  } catch (const Error &e) {
    std::fprintf(stderr, "error code=%s message=\"%s\"\n", e.code().c_str(), e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error code=internal message=\"%s\"\n", e.what());
    return 3;
  }
  return 0;
}
