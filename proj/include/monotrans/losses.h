// monotrans/losses.h

// Stage-1 Viterbi training criteria (smoothed frame CE, boost loss, focal
// auxiliary encoder CE, chunking, gradient clipping) and the stage-2 full-sum
// criterion. Reduction is a sum over frames and a mean over utterances.

#ifndef MONOTRANS_LOSSES_H_
#define MONOTRANS_LOSSES_H_

#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/model.h"
#include "monotrans/topology.h"

namespace monotrans {

struct LossWeights {
  double label_smooth = 0.2;
  double boost_scale = 5.0;
  double focal_gamma = 1.0;
  double enc_scale = 1.0;     // final-layer auxiliary CE
  double middle_scale = 0.3;  // middle-layer auxiliary CE
  double fs_aux_scale = 0.05;
  double clip_norm = 20.0;

  void Validate() const;
};

/// Loss value plus its gradient w.r.t. the log-prob rows it consumed.
struct RowLoss {
  double loss = 0.0;
  Matrix grad;
};

/// Lattice nodes visited by `alignment`: frame t sits at label position
/// s(t) = number of labels emitted before t.
std::vector<Cell> AlignmentCells(const AlignmentPath &alignment);

/// rows: T x (V+1) log-probs, row t taken at AlignmentCells(alignment)[t].
/// loss = sum_t (1-eps) * -log p_t(y_t) + eps/(V+1) * sum_v -log p_t(v)
RowLoss ViterbiCeLoss(const Matrix &rows, const AlignmentPath &alignment,
                      double label_smooth);

/// Un-smoothed CE over the non-blank frames only, times `scale`.
RowLoss BoostLoss(const Matrix &rows, const AlignmentPath &alignment,
                  double scale);

/// Focal CE of an auxiliary encoder head: sum_t (1-p_t)^gamma * -log p_t,
/// times `scale`. p_t is the head's probability of the aligned symbol.
RowLoss FocalCeLoss(const Matrix &rows, const AlignmentPath &alignment,
                    double gamma, double scale);

/// Window of an utterance for chunked Viterbi training. Frame indices are at
/// the encoder (subsampled) rate; `feats` holds the matching input frames.
struct Chunk {
  int32_t begin = 0;
  int32_t end = 0;
  Matrix feats;
  AlignmentPath alignment;
  LabelSeq seed_history;  // up to k labels emitted before `begin`
};

/// Windows of `window_len` encoder frames with 50% overlap; the last window
/// may be shorter. Throws Error("invalid-arguments") if window_len < 2 or
/// window_len < 2 * context_k.
std::vector<Chunk> ChunkUtterance(const Matrix &feats,
                                  const AlignmentPath &alignment,
                                  int32_t window_len, int32_t context_k,
                                  int32_t subsample);

struct TrainExample {
  std::string id;
  const Matrix *feats = nullptr;
  LabelSeq reference;
  const AlignmentPath *alignment = nullptr;  // stage 1 only
  LabelSeq seed_history;                     // non-empty for chunks
  DropoutSpec dropout;
};

struct Stage1Parts {
  double viterbi = 0.0;
  double boost = 0.0;   // already scaled by boost_scale
  double enc = 0.0;     // already scaled by enc_scale
  double middle = 0.0;  // already scaled by middle_scale
  double Total() const { return viterbi + boost + enc + middle; }
};

/// Forward + backward of the stage-1 composite for one utterance.
/// Gradients are accumulated into the model scaled by `grad_scale`.
Stage1Parts Stage1Utterance(TransducerModel *model, const TrainExample &ex,
                            const LossWeights &w, double grad_scale);

struct BatchLoss {
  double loss = 0.0;  // mean over used utterances
  int used = 0;
  int skipped = 0;
  double grad_norm = 0.0;  // before clipping
};

/// Global-norm clipping; returns the norm before clipping.
double ClipGradNorm(ParamStore *store, double max_norm);

/// Stage-1 batch: mean composite loss; gradients clipped at w.clip_norm.
/// Examples without alignment are skipped and counted. Zeroes gradients
/// first.
BatchLoss Stage1Total(TransducerModel *model,
                      const std::vector<TrainExample> &batch,
                      const LossWeights &w);

/// -log P(reference | X) for one utterance; accumulates scaled gradients.
/// Returns +inf (and touches nothing) when the reference does not fit.
double FsUtterance(TransducerModel *model, const TrainExample &ex,
                   double grad_scale);

/// Adds gradients of (sum of FS losses) * grad_scale without zeroing first,
/// so micro-batches can be accumulated before one update.
BatchLoss AccumulateFs(TransducerModel *model,
                       const std::vector<TrainExample> &batch,
                       double grad_scale);

/// Stage-2 batch: zero gradients, mean FS loss, clip.
BatchLoss Stage2FsLoss(TransducerModel *model,
                       const std::vector<TrainExample> &batch,
                       double clip_norm);

}  // namespace monotrans

#endif  // MONOTRANS_LOSSES_H_
