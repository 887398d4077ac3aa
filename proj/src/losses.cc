// monotrans/losses.cc

#include "monotrans/losses.h"

#include <cmath>
#include <limits>

namespace monotrans {

void LossWeights::Validate() const {
  if (!(label_smooth >= 0.0 && label_smooth < 1.0))
    throw Error("invalid-arguments", "label_smooth must lie in [0, 1)");
  if (boost_scale < 0 || focal_gamma < 0 || enc_scale < 0 || middle_scale < 0 ||
      fs_aux_scale < 0)
    throw Error("invalid-arguments", "loss scales must be non-negative");
  if (!(clip_norm > 0.0))
    throw Error("invalid-arguments", "clip_norm must be positive");
}

std::vector<Cell> AlignmentCells(const AlignmentPath &alignment) {
  std::vector<Cell> cells;
  cells.reserve(alignment.frames.size());
  int32_t s = 0;
  for (int32_t t = 0; t < alignment.NumFrames(); ++t) {
    cells.push_back({t, s});
    if (alignment.frames[t] != alignment.blank) ++s;
  }
  return cells;
}

namespace {

void CheckRows(const Matrix &rows, const AlignmentPath &alignment) {
  if (rows.rows() != alignment.NumFrames())
    throw Error("invalid-arguments",
                "row count " + std::to_string(rows.rows()) +
                    " != alignment length " +
                    std::to_string(alignment.NumFrames()));
  if (rows.cols() != alignment.blank + 1)
    throw Error("invalid-arguments", "row width does not match vocabulary");
}

}  // namespace

RowLoss ViterbiCeLoss(const Matrix &rows, const AlignmentPath &alignment,
                      double label_smooth) {
  CheckRows(rows, alignment);
  const double n_out = static_cast<double>(rows.cols());
  const double uniform = label_smooth / n_out;
  RowLoss out{0.0, Matrix::Constant(rows.rows(), rows.cols(), -uniform)};
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    Label y = alignment.frames[t];
    out.loss += (1.0 - label_smooth) * -rows(t, y);
    out.loss += uniform * -rows.row(t).sum();
    out.grad(t, y) -= 1.0 - label_smooth;
  }
  return out;
}

RowLoss BoostLoss(const Matrix &rows, const AlignmentPath &alignment,
                  double scale) {
  CheckRows(rows, alignment);
  RowLoss out{0.0, Matrix::Zero(rows.rows(), rows.cols())};
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    Label y = alignment.frames[t];
    if (y == alignment.blank) continue;
    out.loss += scale * -rows(t, y);
    out.grad(t, y) = -scale;
  }
  return out;
}

RowLoss FocalCeLoss(const Matrix &rows, const AlignmentPath &alignment,
                    double gamma, double scale) {
  CheckRows(rows, alignment);
  RowLoss out{0.0, Matrix::Zero(rows.rows(), rows.cols())};
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    Label y = alignment.frames[t];
    double lp = rows(t, y);
    double p = std::exp(lp);
    double miss = 1.0 - p;
    double weight = gamma == 0.0 ? 1.0 : std::pow(miss, gamma);
    out.loss += scale * weight * -lp;
    // d/dlp [(1 - e^lp)^g * -lp] = g (1-p)^(g-1) p lp - (1-p)^g
    double d_weight = gamma == 0.0 || miss <= 0.0
                          ? 0.0
                          : gamma * std::pow(miss, gamma - 1.0) * p * lp;
    out.grad(t, y) = scale * (d_weight - weight);
  }
  return out;
}

std::vector<Chunk> ChunkUtterance(const Matrix &feats,
                                  const AlignmentPath &alignment,
                                  int32_t window_len, int32_t context_k,
                                  int32_t subsample) {
  if (window_len < 2)
    throw Error("invalid-arguments", "chunk window must be at least 2 frames");
  if (window_len < 2 * context_k)
    throw Error("invalid-arguments",
                "chunk window must be at least twice the label context");
  const int32_t T = alignment.NumFrames();
  const int32_t stride = window_len / 2;
  std::vector<Chunk> chunks;
  LabelSeq prefix;  // labels emitted before the current chunk start
  int32_t prefix_frame = 0;
  for (int32_t begin = 0;; begin += stride) {
    int32_t end = std::min(begin + window_len, T);
    for (; prefix_frame < begin; ++prefix_frame) {
      Label y = alignment.frames[prefix_frame];
      if (y != alignment.blank) prefix.push_back(y);
    }
    Chunk c;
    c.begin = begin;
    c.end = end;
    int32_t f_begin = begin * subsample;
    int32_t f_end = std::min<int32_t>(end * subsample,
                                      static_cast<int32_t>(feats.rows()));
    c.feats = feats.middleRows(f_begin, f_end - f_begin);
    c.alignment.blank = alignment.blank;
    c.alignment.frames.assign(alignment.frames.begin() + begin,
                              alignment.frames.begin() + end);
    size_t keep = std::min<size_t>(prefix.size(), context_k);
    c.seed_history.assign(prefix.end() - keep, prefix.end());
    chunks.push_back(std::move(c));
    if (end >= T) break;
  }
  return chunks;
}

Stage1Parts Stage1Utterance(TransducerModel *model, const TrainExample &ex,
                            const LossWeights &w, double grad_scale) {
  if (!ex.feats || !ex.alignment)
    throw Error("invalid-arguments", "stage-1 example needs features and an "
                                     "alignment");
  const AlignmentPath &ali = *ex.alignment;
  EncoderCache enc_cache;
  EncoderOutput enc = model->Encode(*ex.feats, ex.dropout, &enc_cache);
  if (enc.h.rows() != ali.NumFrames())
    throw Error("invalid-arguments",
                "alignment of " + ex.id + " has " +
                    std::to_string(ali.NumFrames()) + " frames, encoder " +
                    std::to_string(enc.h.rows()));
  LabelSeq target = Collapse(ali);

  Stage1Parts parts;
  JointCache joint_cache;
  Matrix rows = model->JointCells(enc, target, AlignmentCells(ali),
                                  &joint_cache, ex.seed_history);
  RowLoss ce = ViterbiCeLoss(rows, ali, w.label_smooth);
  parts.viterbi = ce.loss;
  Matrix d_rows = ce.grad;
  if (w.boost_scale > 0.0) {
    RowLoss boost = BoostLoss(rows, ali, w.boost_scale);
    parts.boost = boost.loss;
    d_rows += boost.grad;
  }
  Matrix d_h = Matrix::Zero(enc.h.rows(), enc.h.cols());
  Matrix d_mid;
  model->JointBackward(joint_cache, d_rows * grad_scale, &d_h);

  if (w.enc_scale > 0.0) {
    AuxCache cache;
    Matrix aux = model->AuxLogProbs(enc.h, AuxHead::kFinal, &cache);
    RowLoss focal = FocalCeLoss(aux, ali, w.focal_gamma, w.enc_scale);
    parts.enc = focal.loss;
    model->AuxBackward(cache, AuxHead::kFinal, focal.grad * grad_scale, &d_h);
  }
  if (w.middle_scale > 0.0) {
    AuxCache cache;
    Matrix aux = model->AuxLogProbs(enc.middle, AuxHead::kMiddle, &cache);
    RowLoss focal = FocalCeLoss(aux, ali, w.focal_gamma, w.middle_scale);
    parts.middle = focal.loss;
    d_mid = Matrix::Zero(enc.middle.rows(), enc.middle.cols());
    model->AuxBackward(cache, AuxHead::kMiddle, focal.grad * grad_scale,
                       &d_mid);
  }
  model->EncoderBackward(enc_cache, d_h, d_mid);
  return parts;
}

double ClipGradNorm(ParamStore *store, double max_norm) {
  double norm = store->GradNorm();
  if (norm > max_norm) store->ScaleGrad(max_norm / norm);
  return norm;
}

BatchLoss Stage1Total(TransducerModel *model,
                      const std::vector<TrainExample> &batch,
                      const LossWeights &w) {
  model->Params().ZeroGrad();
  BatchLoss out;
  int with_alignment = 0;
  for (const auto &ex : batch)
    if (ex.alignment) ++with_alignment;
  out.skipped = static_cast<int>(batch.size()) - with_alignment;
  if (with_alignment == 0) return out;
  const double scale = 1.0 / with_alignment;
  for (const auto &ex : batch) {
    if (!ex.alignment) continue;
    out.loss += Stage1Utterance(model, ex, w, scale).Total();
    ++out.used;
  }
  out.loss /= out.used;
  out.grad_norm = ClipGradNorm(&model->Params(), w.clip_norm);
  return out;
}

double FsUtterance(TransducerModel *model, const TrainExample &ex,
                   double grad_scale) {
  EncoderCache enc_cache;
  EncoderOutput enc = model->Encode(*ex.feats, ex.dropout, &enc_cache);
  if (static_cast<Eigen::Index>(ex.reference.size()) > enc.h.rows())
    return std::numeric_limits<double>::infinity();
  JointCache joint_cache;
  LogLattice lattice = model->JointLattice(enc, ex.reference, &joint_cache);
  FullSumResult fs = FullSum(lattice, ex.reference);
  if (!fs.Feasible()) return std::numeric_limits<double>::infinity();
  for (double &g : fs.occupancy.Data()) g *= -grad_scale;
  Matrix d_h = Matrix::Zero(enc.h.rows(), enc.h.cols());
  model->JointBackward(joint_cache, fs.occupancy, &d_h);
  model->EncoderBackward(enc_cache, d_h, Matrix());
  return -fs.log_prob;
}

BatchLoss AccumulateFs(TransducerModel *model,
                       const std::vector<TrainExample> &batch,
                       double grad_scale) {
  BatchLoss out;
  for (const auto &ex : batch) {
    double loss = FsUtterance(model, ex, grad_scale);
    if (std::isinf(loss)) {
      ++out.skipped;
      continue;
    }
    out.loss += loss;
    ++out.used;
  }
  if (out.used > 0) out.loss /= out.used;
  return out;
}

BatchLoss Stage2FsLoss(TransducerModel *model,
                       const std::vector<TrainExample> &batch,
                       double clip_norm) {
  model->Params().ZeroGrad();
  // Mean over the utterances whose reference fits the encoder length.
  int usable = 0;
  for (const auto &ex : batch)
    if (static_cast<int32_t>(ex.reference.size()) <=
        model->Config().SubsampledFrames(static_cast<int32_t>(ex.feats->rows())))
      ++usable;
  BatchLoss out;
  if (usable == 0) {
    out.skipped = static_cast<int>(batch.size());
    return out;
  }
  out = AccumulateFs(model, batch, 1.0 / usable);
  out.grad_norm = ClipGradNorm(&model->Params(), clip_norm);
  return out;
}

}  // namespace monotrans
