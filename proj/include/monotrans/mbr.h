// monotrans/mbr.h

// Minimum Bayes risk training over static N-best lists. Sequence posteriors
// are LM-aware and renormalized over the list:
//
//   p_i = exp(beta * (m_i + lm_scale * l_i)) / sum_j exp(beta * (m_j + lm_scale * l_j))
//
// with m_i the full-sum transducer log-probability (recomputed during
// training) and l_i the frozen LM log-probability. The loss is the expected
// Levenshtein risk; the reference is always a member of the list.

#ifndef MONOTRANS_MBR_H_
#define MONOTRANS_MBR_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/decoder.h"
#include "monotrans/lm.h"
#include "monotrans/losses.h"
#include "monotrans/model.h"

namespace monotrans {

struct EditStats {
  int64_t distance = 0;
  int64_t sub = 0;
  int64_t del = 0;
  int64_t ins = 0;

  EditStats &operator+=(const EditStats &o) {
    distance += o.distance;
    sub += o.sub;
    del += o.del;
    ins += o.ins;
    return *this;
  }
  bool operator==(const EditStats &) const = default;
};

/// Minimal edit distance with its decomposition. The backtrace prefers the
/// diagonal (match/substitution), then deletion, then insertion.
template <typename T>
EditStats Levenshtein(const std::vector<T> &ref, const std::vector<T> &hyp) {
  const size_t R = ref.size(), H = hyp.size();
  std::vector<int64_t> d((R + 1) * (H + 1));
  auto D = [&](size_t i, size_t j) -> int64_t & { return d[i * (H + 1) + j]; };
  for (size_t i = 0; i <= R; ++i) D(i, 0) = static_cast<int64_t>(i);
  for (size_t j = 0; j <= H; ++j) D(0, j) = static_cast<int64_t>(j);
  for (size_t i = 1; i <= R; ++i)
    for (size_t j = 1; j <= H; ++j) {
      int64_t diag = D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      D(i, j) = std::min({diag, D(i - 1, j) + 1, D(i, j - 1) + 1});
    }
  EditStats st;
  st.distance = D(R, H);
  size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        D(i, j) == D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++st.sub;
      --i;
      --j;
    } else if (i > 0 && D(i, j) == D(i - 1, j) + 1) {
      ++st.del;
      --i;
    } else {
      ++st.ins;
      --j;
    }
  }
  return st;
}

struct NBestEntry {
  LabelSeq labels;
  double model_logprob = kLogZero;  // recomputed during training
  double lm_logprob = 0.0;
  double risk = 0.0;
  bool is_reference = false;
};

struct NBestList {
  std::string utt_id;
  std::vector<NBestEntry> entries;
  int ref_index = -1;

  /// Throws Error("invalid-nbest") on duplicates or a missing reference.
  void Validate() const;
};

struct MbrScales {
  double lm_scale = 1.0;  // lambda_1
  double beta = 0.0;      // 0 selects 1 / lm_scale
  double fs_aux_scale = 0.05;

  double Beta() const { return beta > 0.0 ? beta : 1.0 / lm_scale; }
  void Validate() const;
};

std::vector<double> SeqPosteriors(const std::vector<NBestEntry> &entries,
                                  const MbrScales &scales);

struct MbrResult {
  double loss = 0.0;               // expected risk
  std::vector<double> d_model;     // d loss / d model_logprob_i
  std::vector<double> posteriors;
};

/// Throws Error("invalid-arguments") on an empty list.
MbrResult MbrLoss(const std::vector<NBestEntry> &entries,
                  const MbrScales &scales);

/// Levenshtein risk of every entry against the reference, after W mapping.
void ComputeRisks(NBestList *list, const WMapping &mapping = {});

/// First `n` entries in stored order; if the reference falls outside them it
/// replaces the last kept entry.
NBestList SelectTopN(const NBestList &list, int n);

struct Stage3Parts {
  double mbr = 0.0;
  double fs = 0.0;  // -log P(reference), unscaled
  double Total(double fs_aux_scale) const { return mbr + fs_aux_scale * fs; }
};

/// Recomputes every entry's full-sum log-probability with the current
/// model, then accumulates grad_scale * d(MBR + fs_aux_scale * FS_ref).
/// Entries longer than the encoder output get probability zero.
Stage3Parts Stage3Utterance(TransducerModel *model, const Matrix &feats,
                            NBestList *list, const MbrScales &scales,
                            double grad_scale, bool backward = true);

struct Stage3Example {
  const Matrix *feats = nullptr;
  NBestList *list = nullptr;
};

/// Zero gradients, mean of (MBR + fs_aux_scale * FS) over the batch, clip.
BatchLoss Stage3Total(TransducerModel *model,
                      const std::vector<Stage3Example> &batch,
                      const MbrScales &scales, double clip_norm);

/// Static N-best store.
struct NBestStore {
  int n = 4;
  double lambda1 = 0.0;
  uint64_t seed = 0;
  std::vector<NBestList> lists;
};

/// "#nbest v1 N=<n> lambda1=<v> seed=<s>", then per utterance
/// "utt <id> <count>" and count lines "hyp|ref <lm_logprob> <S> <labels...>".
void WriteNBestStore(std::ostream &os, const NBestStore &store);
/// Risks are filled against the reference with identity mapping.
NBestStore ReadNBestStore(std::istream &is);

struct NBestUtterance {
  std::string id;
  const Matrix *feats = nullptr;
  LabelSeq reference;
};

struct NBestBuildOptions {
  int n = 4;
  double subset_fraction = 0.25;
  uint64_t seed = 0;
  int32_t max_frames = 0;  // 0: no limit
  int32_t max_labels = 0;  // 0: no limit
  DecodeConfig decode;     // lm_scale is the generation lambda_1
};

struct NBestBuildReport {
  int candidates = 0;  // utterances passing the length filters
  int selected = 0;
  int failed = 0;
};

/// Seeded subset selection: Fisher-Yates over the filtered indices driven by
/// a 64-bit Mersenne twister, first round(fraction * n) kept, original order
/// restored.
std::vector<size_t> SelectSubset(size_t count, double fraction, uint64_t seed);

/// Decodes the selected subset with `gen_lm`, keeps up to 2N unique
/// hypotheses, flags or appends the reference, and stores log P_lm from
/// `score_lm` (the frozen LM used by the criterion).
NBestStore BuildStaticNBest(const TransducerModel &model,
                            const std::vector<NBestUtterance> &utts,
                            const NgramLm *gen_lm, const NgramLm &score_lm,
                            const NBestBuildOptions &opts,
                            NBestBuildReport *report = nullptr);

}  // namespace monotrans

#endif  // MONOTRANS_MBR_H_
