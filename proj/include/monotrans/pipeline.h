// monotrans/pipeline.h

// Orchestration of the recipe: synthetic data, LMs, CTC alignment model,
// forced alignment, the three transducer training stages, N-best generation,
// evaluation and scale tuning. Every artifact lives under the configured
// work directory at the paths given by WorkPaths.

#ifndef MONOTRANS_PIPELINE_H_
#define MONOTRANS_PIPELINE_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "monotrans/config.h"
#include "monotrans/dataio.h"
#include "monotrans/decoder.h"
#include "monotrans/lm.h"
#include "monotrans/losses.h"
#include "monotrans/mbr.h"
#include "monotrans/model.h"
#include "monotrans/optim.h"

namespace monotrans {

struct WorkPaths {
  explicit WorkPaths(std::string root) : root(std::move(root)) {}

  std::string Data(const std::string &split) const { return root + "/data/" + split; }
  std::string Lm() const { return root + "/lm/lm.arpa"; }
  std::string GenLm() const { return root + "/lm/gen.arpa"; }
  std::string CtcDir() const { return root + "/ctc"; }
  std::string Alignments(const std::string &split) const {
    return root + "/align/" + split + ".ali";
  }
  std::string StageDir(int stage) const {
    return root + "/stage" + std::to_string(stage);
  }
  std::string Best(const std::string &dir) const { return dir + "/best.ckpt"; }
  std::string Final(const std::string &dir) const { return dir + "/final.ckpt"; }
  std::string Metrics(const std::string &dir) const { return dir + "/metrics.tsv"; }
  std::string Risk() const { return StageDir(3) + "/risk.tsv"; }
  std::string NBest(const std::string &split) const {
    return root + "/nbest/" + split + ".nbest";
  }

  std::string root;
};

SyntheticSpec SyntheticSpecFrom(const Config &cfg);
ModelConfig ModelConfigFrom(const Config &cfg, int32_t vocab, int32_t feat_dim);
LossWeights LossWeightsFrom(const Config &cfg);
MaskSpec MaskSpecFrom(const Config &cfg);
/// Beam and scales from decode.*; loads decode.lexicon when set.
DecodeConfig DecodeConfigFrom(const Config &cfg);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;
};

struct StageResult {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;  // 0 is the initial model
  double best_score = 0.0;
  std::vector<double> risk;  // stage 3: expected risk on the store, epoch 0..E
};

/// Writes train/dev/test splits.
void GenData(const Config &cfg);
/// Trains the recognition LM (lm.order) and the generation LM (lm.gen_order)
/// on the training transcripts.
void TrainLms(const Config &cfg);
StageResult TrainCtc(const Config &cfg);

struct AlignReport {
  int aligned = 0;
  int failed = 0;
};
/// Forced alignment of train and dev with the best CTC checkpoint.
AlignReport Align(const Config &cfg);

/// Trains transducer stage 1, 2 or 3. Throws Error("missing-artifact") naming
/// the first missing prerequisite.
StageResult RunStage(const Config &cfg, int stage);

/// Static N-best stores for train (subset stage3.subset) and dev (all
/// utterances) decoded with the stage-2 best model and the generation LM.
NBestBuildReport BuildNBest(const Config &cfg);

/// stage3.gen_lm_scale, or with "auto" the best positive tune.lm_grid value
/// on dev for `model` decoding with `gen_lm`.
double GenerationLmScale(const Config &cfg, const TransducerModel &model,
                         const NgramLm &gen_lm);

struct UttResult {
  std::string id;
  LabelSeq hyp;
  EditStats stats;
  int64_t ref_tokens = 0;
};

struct EvalReport {
  double lm_scale = 0.0;
  double ilm_scale = 0.0;
  int64_t ref_tokens = 0;
  EditStats totals;
  double wer = 0.0;  // percentages of ref_tokens
  double sub = 0.0;
  double del = 0.0;
  double ins = 0.0;
  std::vector<UttResult> utts;
};

EvalReport Evaluate(const TransducerModel &model, const NgramLm *lm,
                    const Dataset &data, const DecodeConfig &dc);

/// Fills the percentage fields from per-utterance results.
void Aggregate(EvalReport *report);

struct TuneResult {
  double lm_scale = 0.0;
  double ilm_scale = 0.0;
  EvalReport best;
  struct Point {
    double lm_scale, ilm_scale, wer;
  };
  std::vector<Point> grid;
};

/// Exhaustive grid; lowest WER wins, ties go to the smaller lm_scale and then
/// the smaller ilm_scale. Throws Error("invalid-arguments") on an empty grid.
TuneResult TuneScales(const TransducerModel &model, const NgramLm *lm,
                      const Dataset &data, const std::vector<double> &lm_grid,
                      const std::vector<double> &ilm_grid, DecodeConfig dc);

/// Groups indices into batches of at least `batch_frames` input frames (the
/// last may be smaller) after a seeded shuffle.
std::vector<std::vector<size_t>> MakeBatches(const std::vector<int32_t> &frames,
                                             int64_t batch_frames, uint64_t seed);

NgramLm LoadLm(const std::string &path);
void SaveLm(const std::string &path, const NgramLm &lm);

}  // namespace monotrans

#endif  // MONOTRANS_PIPELINE_H_
