// monotrans/decoder.h

// Time-synchronous beam search over the monotonic topology with shallow
// fusion and internal-LM correction:
//
//   combined = log P_rnnt(a | X) + lm_scale * log P_lm(W(a)) - ilm_scale * log P_ilm(a)
//
// Blank steps carry no LM or ILM term. Pruning keeps the top beam_size
// hypotheses by combined score; hypotheses with equal label sequences are
// merged by log-sum-exp of their transducer scores.

#ifndef MONOTRANS_DECODER_H_
#define MONOTRANS_DECODER_H_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/lm.h"
#include "monotrans/model.h"

namespace monotrans {

/// Label-to-word mapping. Identity renders each label id as its decimal
/// string. A lexicon maps label sequences to words; a word is complete as
/// soon as the pending labels equal one of its entries.
class WMapping {
 public:
  WMapping() = default;  // identity
  static WMapping FromLexicon(const std::map<LabelSeq, std::string> &entries);
  /// One entry per line: "<word> <label> <label> ...".
  static WMapping ReadLexicon(std::istream &is);

  bool IsIdentity() const { return lexicon_.empty(); }

  /// Throws Error("unmapped-label") when labels do not segment into entries.
  std::vector<std::string> Apply(const LabelSeq &labels) const;

  enum class Step { kPartial, kWord, kInvalid };
  /// Extends a pending label buffer by one label. On kWord, *word is set and
  /// the buffer is cleared.
  Step Extend(LabelSeq *pending, Label label, std::string *word) const;

 private:
  std::map<LabelSeq, std::string> lexicon_;
  std::map<LabelSeq, bool> prefixes_;  // proper prefixes of entries
};

std::vector<std::string> ApplyWMapping(const LabelSeq &labels,
                                       const WMapping &mapping);

struct DecodeConfig {
  double lm_scale = 0.0;   // lambda_1
  double ilm_scale = 0.0;  // lambda_2
  int beam_size = 8;
  int n_best = 1;
  WMapping w_mapping;

  void Validate() const;
};

struct Hypothesis {
  LabelSeq labels;
  double transducer = 0.0;
  double lm = 0.0;
  double ilm = 0.0;
  double combined = 0.0;
};

/// Ranked hypotheses, at most cfg.n_best. `lm` may be null when
/// cfg.lm_scale == 0; with lm_scale == 0 the LM is never queried and the lm
/// field stays 0 (likewise ilm with ilm_scale == 0).
std::vector<Hypothesis> BeamDecode(const TransducerModel &model,
                                   const NgramLm *lm, const Matrix &feats,
                                   const DecodeConfig &cfg);

/// Exact argmax over every alignment; refuses when (V+1)^T' > max_paths.
Hypothesis ExhaustiveDecode(const TransducerModel &model, const NgramLm *lm,
                            const Matrix &feats, const DecodeConfig &cfg,
                            uint64_t max_paths = 1000000);

/// "utt <id> <rank> <combined> <transducer> <lm> <ilm> | <labels...>"
std::string FormatDecodeLine(const std::string &utt_id, int rank,
                             const Hypothesis &hyp);

}  // namespace monotrans

#endif  // MONOTRANS_DECODER_H_
