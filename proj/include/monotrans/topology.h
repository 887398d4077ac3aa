// monotrans/topology.h

// Strictly monotonic transducer label topology. Every frame emits exactly one
// symbol: blank (time advances, label position stays) or the next reference
// label (both advance). Node (t, s) means "t frames consumed, s labels
// emitted"; the output distribution at frame t depends on the first s labels.

#ifndef MONOTRANS_TOPOLOGY_H_
#define MONOTRANS_TOPOLOGY_H_

#include <cstdint>
#include <vector>

#include "monotrans/base.h"

namespace monotrans {

/// Frame-level alignment; each entry is a label id or `blank` (== V).
struct AlignmentPath {
  std::vector<Label> frames;
  Label blank = 0;

  int32_t NumFrames() const { return static_cast<int32_t>(frames.size()); }
  bool operator==(const AlignmentPath &) const = default;
};

/// Dense T x (S+1) x (V+1) table of log-probabilities. Entry (t, s, v) is
/// log P(v | first s target labels, frame t); v == V is blank.
class LogLattice {
 public:
  LogLattice() = default;
  LogLattice(int32_t num_frames, int32_t target_len, int32_t vocab_size,
             double fill = 0.0);

  int32_t NumFrames() const { return num_frames_; }
  int32_t TargetLen() const { return target_len_; }
  int32_t VocabSize() const { return vocab_size_; }
  Label Blank() const { return vocab_size_; }
  int32_t NumOutputs() const { return vocab_size_ + 1; }

  double &operator()(int32_t t, int32_t s, int32_t v) {
    return data_[Index(t, s, v)];
  }
  double operator()(int32_t t, int32_t s, int32_t v) const {
    return data_[Index(t, s, v)];
  }
  double *Row(int32_t t, int32_t s) { return &data_[Index(t, s, 0)]; }
  const double *Row(int32_t t, int32_t s) const {
    return &data_[Index(t, s, 0)];
  }

  std::vector<double> &Data() { return data_; }
  const std::vector<double> &Data() const { return data_; }
  bool Empty() const { return data_.empty(); }

  /// Largest |logsumexp(row)| over all (t, s) rows; 0 for normalized tables.
  double MaxNormalizationError() const;

 private:
  size_t Index(int32_t t, int32_t s, int32_t v) const {
    return (static_cast<size_t>(t) * (target_len_ + 1) + s) * (vocab_size_ + 1) +
           v;
  }

  int32_t num_frames_ = 0;
  int32_t target_len_ = 0;
  int32_t vocab_size_ = 0;
  std::vector<double> data_;
};

struct FullSumResult {
  double log_prob = kLogZero;
  /// d log_prob / d lattice, same shape as the input lattice. Empty when the
  /// target is infeasible.
  LogLattice occupancy;

  bool Feasible() const { return log_prob != kLogZero; }
};

struct ViterbiResult {
  double log_prob = kLogZero;
  AlignmentPath path;
};

/// Removes blanks, order preserved.
LabelSeq Collapse(const AlignmentPath &path);

/// Number of monotonic alignments of S labels into T frames, C(T, S).
/// Throws Error("invalid-arguments") when S > T or either is negative.
uint64_t CountPaths(int32_t num_frames, int32_t target_len);

/// All monotonic alignments of `target` into `num_frames` frames, in
/// lexicographic order of emission positions. Refuses when there are more
/// than `max_paths`.
std::vector<AlignmentPath> EnumeratePaths(int32_t num_frames,
                                          const LabelSeq &target, Label blank,
                                          uint64_t max_paths = 1000000);

/// Sum of the per-frame lattice entries visited by `path`.
double PathLogProb(const LogLattice &lattice, const AlignmentPath &path);

/// Forward-backward over the monotonic topology. Returns log_prob == -inf and
/// an empty occupancy when S > T or no path has non-zero probability.
FullSumResult FullSum(const LogLattice &lattice, const LabelSeq &target);

/// Forward log-probability only.
double FullSumLogProb(const LogLattice &lattice, const LabelSeq &target);

/// Max-product counterpart of FullSum. On ties the blank predecessor wins.
ViterbiResult ViterbiScore(const LogLattice &lattice, const LabelSeq &target);

}  // namespace monotrans

#endif  // MONOTRANS_TOPOLOGY_H_
