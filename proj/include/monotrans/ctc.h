// monotrans/ctc.h

// CTC loss for the small alignment model, Viterbi forced alignment, and the
// conversion of CTC label loops into transducer (one emission per label)
// alignments.

#ifndef MONOTRANS_CTC_H_
#define MONOTRANS_CTC_H_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/topology.h"

namespace monotrans {

/// CTC frame labelling: label loops allowed, blank == V.
struct FrameAlignment {
  enum class Source { kCtcViterbi };
  std::vector<Label> frames;
  Label blank = 0;
  Source source = Source::kCtcViterbi;
};

struct CtcResult {
  double log_prob = kLogZero;
  /// d log_prob / d log-prob table (T x (V+1)); empty when unreachable.
  Matrix grad;
};

/// Minimum frames needed for `target` under CTC rules: S plus one separator
/// per adjacent repeat.
int32_t CtcMinFrames(const LabelSeq &target);

/// Merge repeats, then drop blanks.
LabelSeq CtcCollapse(const std::vector<Label> &frames, Label blank);

/// `log_probs` is T x (V+1), row-wise log-normalized, blank in the last
/// column.
CtcResult CtcFullSum(const Matrix &log_probs, const LabelSeq &target);

/// Best CTC state path emitted as per-frame labels. Throws
/// Error("unreachable") when the target cannot be produced in T frames.
FrameAlignment CtcViterbiAlign(const Matrix &log_probs, const LabelSeq &target);

/// Each maximal run of one label (runs break at blanks and label changes)
/// keeps a single emission on its last frame; everything else becomes blank.
AlignmentPath ToTransducerAlignment(const FrameAlignment &fa);

/// Alignment store: one line per utterance, "<id> <T> <y_1> ... <y_T>" with
/// blank written as "_".
void WriteAlignments(std::ostream &os,
                     const std::map<std::string, AlignmentPath> &alignments);
std::map<std::string, AlignmentPath> ReadAlignments(std::istream &is,
                                                    int32_t vocab_size);

}  // namespace monotrans

#endif  // MONOTRANS_CTC_H_
