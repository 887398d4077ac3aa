// monotrans/dataio.h

// Synthetic transduction corpus, feature masking and dataset persistence.
//
// On disk a split is a directory holding
//   manifest.txt    "#manifest v1 feat_dim=<d> vocab=<K>", then "<id> <T> <S>"
//   transcript.txt  "<id> <label ids...>"
//   feats/<id>.f32  T*feat_dim little-endian float32, row-major

#ifndef MONOTRANS_DATAIO_H_
#define MONOTRANS_DATAIO_H_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "monotrans/base.h"

namespace monotrans {

struct SyntheticSpec {
  uint64_t seed = 1;
  int32_t vocab = 10;
  int32_t num_train = 2000;
  int32_t num_dev = 200;
  int32_t num_test = 200;
  int32_t min_len = 3;
  int32_t max_len = 10;
  int32_t min_frames_per_label = 1;
  int32_t max_frames_per_label = 3;
  int32_t feat_dim = 12;
  double noise_sigma = 0.9;
  double grammar_sharpness = 2.0;  // spread of the bigram log-weights

  void Validate() const;
};

struct Utterance {
  std::string id;
  Matrix feats;  // T x feat_dim, values representable as float32
  LabelSeq reference;

  int32_t NumFrames() const { return static_cast<int32_t>(feats.rows()); }
};

struct Dataset {
  int32_t feat_dim = 0;
  int32_t vocab = 0;
  std::vector<Utterance> utts;

  bool operator==(const Dataset &o) const;
};

struct Corpus {
  Dataset train, dev, test;
};

/// Label prototypes (vocab x feat_dim) and the bigram grammar
/// ((vocab+1) x vocab, row vocab is the start state) drawn from spec.seed.
struct SyntheticSource {
  Matrix prototypes;
  Matrix transitions;
};
SyntheticSource MakeSource(const SyntheticSpec &spec);

/// 64-bit mixing step used to derive per-utterance seeds.
uint64_t SplitMix64(uint64_t x);

Corpus Generate(const SyntheticSpec &spec);

struct MaskSpec {
  int32_t time_masks = 0;
  int32_t time_width = 0;
  int32_t feat_masks = 0;
  int32_t feat_width = 0;
};

/// Zeroes `time_masks` spans of `time_width` frames and `feat_masks` bands of
/// `feat_width` channels at seeded random offsets. A width equal to the
/// dimension zeroes it entirely. Throws Error("invalid-arguments") when a
/// width exceeds its dimension.
Matrix MaskAugment(const Matrix &feats, const MaskSpec &spec, uint64_t seed);

inline constexpr int32_t kNoLimit = std::numeric_limits<int32_t>::max();

struct FilterReport {
  int kept = 0;
  int too_long = 0;    // T > max_frames
  int too_many = 0;    // S > max_labels
  int infeasible = 0;  // S > T after subsampling
};

std::vector<Utterance> LengthFilter(const std::vector<Utterance> &utts,
                                    int32_t max_frames, int32_t max_labels,
                                    int32_t subsample = 1,
                                    FilterReport *report = nullptr);

void WriteDataset(const std::string &dir, const Dataset &data);
/// Throws Error("missing-file") naming the path when a file is absent and
/// Error("format") on malformed content.
Dataset ReadDataset(const std::string &dir);

/// Space-separated decimal label ids, one utterance per line, for LM training.
std::vector<std::vector<std::string>> LabelSentences(const Dataset &data);

}  // namespace monotrans

#endif  // MONOTRANS_DATAIO_H_
