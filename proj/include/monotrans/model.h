// monotrans/model.h

// Tiny transducer network with hand-written backpropagation.
//
//   encoder:    stack of windowed affine + tanh layers; the first layer
//               strides by `subsample` input frames.
//   prediction: k-label history -> concatenated embeddings -> affine + tanh.
//   joint:      z = tanh(h_t U_enc + g_s U_pred + b), log_softmax(z W + c).
//
// Forward calls fill caller-owned caches; backward calls consume them and
// accumulate into ParamStore::grad.

#ifndef MONOTRANS_MODEL_H_
#define MONOTRANS_MODEL_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/params.h"
#include "monotrans/topology.h"

namespace monotrans {

struct ModelConfig {
  int32_t vocab_size = 10;  // labels; blank is id vocab_size
  int32_t context_k = 1;
  int32_t feat_dim = 12;
  int32_t enc_layers = 2;
  int32_t enc_dim = 48;
  int32_t enc_context = 1;  // neighbouring frames on each side
  int32_t pred_dim = 16;
  int32_t joint_dim = 48;
  int32_t subsample = 1;
  double dropout = 0.1;
  int32_t aux_middle_layer = 0;  // 0-based encoder layer feeding the middle head
  bool aux_heads = true;

  int32_t NumOutputs() const { return vocab_size + 1; }
  int32_t SubsampledFrames(int32_t num_frames) const {
    return (num_frames + subsample - 1) / subsample;
  }
  /// Throws Error("invalid-arguments") naming the first bad field.
  void Validate() const;
  bool operator==(const ModelConfig &) const = default;
};

struct EncoderOutput {
  Matrix h;       // T' x enc_dim
  Matrix middle;  // T' x enc_dim, output of layer aux_middle_layer
};

struct DropoutSpec {
  bool train = false;
  uint64_t seed = 0;
  double rate = -1.0;  // negative: use ModelConfig::dropout
};

struct EncoderCache {
  bool valid = false;
  std::vector<Matrix> inputs;   // windowed layer inputs
  std::vector<Matrix> outputs;  // tanh outputs before dropout
  std::vector<Matrix> masks;    // inverted-dropout scales; empty in eval mode
  int32_t num_input_frames = 0;
};

/// Windowed affine + tanh stack shared by the transducer and the CTC model.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig &cfg, const std::string &prefix, ParamStore *store);

  EncoderOutput Forward(const ParamStore &store, const Matrix &feats,
                        const DropoutSpec &dropout, EncoderCache *cache) const;
  /// d_h and d_middle are gradients w.r.t. EncoderOutput::h / ::middle;
  /// d_middle may be empty.
  void Backward(ParamStore *store, const EncoderCache &cache,
                const Matrix &d_h, const Matrix &d_middle) const;

 private:
  Matrix Window(const Matrix &x, int layer, int32_t out_frames) const;
  void ScatterWindow(const Matrix &d_win, int layer, Matrix *d_x) const;

  ModelConfig cfg_;
  std::vector<int> weight_, bias_;
};

/// A (frame, label position) lattice node whose output row is requested.
struct Cell {
  int32_t t = 0;
  int32_t s = 0;
};

struct JointCache {
  bool valid = false;
  std::vector<Cell> cells;
  std::vector<std::vector<Label>> histories;  // per s, k ids (BOS padded)
  Matrix enc_h;        // T' x enc_dim
  Matrix pred_in;      // (S+1) x k*pred_dim
  Matrix pred_out;     // (S+1) x pred_dim
  Matrix z;            // cells x joint_dim
  Matrix log_probs;    // cells x (V+1)
};

struct AuxCache {
  bool valid = false;
  Matrix input;
  Matrix log_probs;
};

enum class AuxHead { kFinal, kMiddle };

class TransducerModel {
 public:
  TransducerModel() = default;
  /// Parameters are uniform-initialized from `seed`.
  TransducerModel(const ModelConfig &cfg, uint64_t seed);

  const ModelConfig &Config() const { return cfg_; }
  ParamStore &Params() { return store_; }
  const ParamStore &Params() const { return store_; }

  /// Throws Error("invalid-arguments") on empty input or T < subsample.
  EncoderOutput Encode(const Matrix &feats, const DropoutSpec &dropout,
                       EncoderCache *cache = nullptr) const;

  /// Label-history ids for positions 0..S of `seed ++ target`, each the last
  /// k labels, left-padded with the begin-of-sequence id (vocab_size).
  std::vector<std::vector<Label>> Histories(const LabelSeq &target,
                                            const LabelSeq &seed = {}) const;

  /// Output rows for the requested cells; row i belongs to cells[i].
  Matrix JointCells(const EncoderOutput &enc, const LabelSeq &target,
                    const std::vector<Cell> &cells, JointCache *cache = nullptr,
                    const LabelSeq &seed = {}) const;

  /// Dense T' x (S+1) x (V+1) lattice.
  LogLattice JointLattice(const EncoderOutput &enc, const LabelSeq &target,
                          JointCache *cache = nullptr,
                          const LabelSeq &seed = {}) const;

  /// d_rows: gradient w.r.t. the rows returned by JointCells. Accumulates
  /// parameter gradients and adds the encoder gradient into *d_h.
  void JointBackward(const JointCache &cache, const Matrix &d_rows,
                     Matrix *d_h);
  void JointBackward(const JointCache &cache, const LogLattice &d_lattice,
                     Matrix *d_h);

  void EncoderBackward(const EncoderCache &cache, const Matrix &d_h,
                       const Matrix &d_middle);

  /// T' x (V+1) log-probs of an auxiliary CE head. Throws Error("missing-head")
  /// when the model was built without auxiliary heads.
  Matrix AuxLogProbs(const Matrix &x, AuxHead head,
                     AuxCache *cache = nullptr) const;
  void AuxBackward(const AuxCache &cache, AuxHead head, const Matrix &d_rows,
                   Matrix *d_x);

  /// Zero-encoder internal LM: joint output with h_t = 0, blank dropped,
  /// renormalized over the V labels. `history` holds the most recent labels;
  /// only the last k are used.
  std::vector<double> IlmLabelLogProbs(const LabelSeq &history) const;

  // Incremental scoring for search.
  Matrix ProjectEncoder(const EncoderOutput &enc) const;  // T' x joint_dim
  Vector ProjectHistory(const std::vector<Label> &history_ids) const;
  std::vector<Label> HistoryIds(const LabelSeq &labels) const;
  /// Writes V+1 log-probs into `out` for projected encoder row and history.
  void OutputLogProbs(const double *enc_proj, const Vector &hist_proj,
                      double *out) const;

  /// Stage-2 hook for normalization-layer freezing. The toy network has no
  /// normalization layers, so this only records the flag.
  void FreezeNormalization(bool frozen) { norm_frozen_ = frozen; }
  bool NormalizationFrozen() const { return norm_frozen_; }

 private:
  void CheckCache(bool valid, const char *what) const;

  ModelConfig cfg_;
  ParamStore store_;
  Encoder encoder_;
  int emb_ = -1, pred_w_ = -1, pred_b_ = -1;
  int joint_enc_ = -1, joint_pred_ = -1, joint_b_ = -1;
  int out_w_ = -1, out_b_ = -1;
  int aux_final_w_ = -1, aux_final_b_ = -1, aux_mid_w_ = -1, aux_mid_b_ = -1;
  bool norm_frozen_ = false;
};

/// Small alignment model: the shared encoder plus one softmax layer.
class CtcModel {
 public:
  CtcModel() = default;
  CtcModel(const ModelConfig &cfg, uint64_t seed);

  const ModelConfig &Config() const { return cfg_; }
  ParamStore &Params() { return store_; }
  const ParamStore &Params() const { return store_; }

  struct Cache {
    EncoderCache enc;
    Matrix h;
    Matrix log_probs;
  };
  /// T' x (V+1) log-probs.
  Matrix LogProbs(const Matrix &feats, const DropoutSpec &dropout,
                  Cache *cache = nullptr) const;
  /// d_log_probs: gradient w.r.t. the returned table.
  void Backward(const Cache &cache, const Matrix &d_log_probs);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Encoder encoder_;
  int out_w_ = -1, out_b_ = -1;
};

enum class ModelKind : uint32_t { kTransducer = 1, kCtc = 2 };

/// Checkpoint: magic, version, kind, config, then the tensor section.
void SaveCheckpoint(std::ostream &os, ModelKind kind, const ModelConfig &cfg,
                    const ParamStore &store);
void SaveCheckpoint(const std::string &path, const TransducerModel &model);
void SaveCheckpoint(const std::string &path, const CtcModel &model);
TransducerModel LoadTransducer(const std::string &path);
CtcModel LoadCtc(const std::string &path);
/// Reads the header only.
std::pair<ModelKind, ModelConfig> ReadCheckpointHeader(std::istream &is);

}  // namespace monotrans

#endif  // MONOTRANS_MODEL_H_
