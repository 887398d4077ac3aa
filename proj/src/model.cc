// monotrans/model.cc

#include "monotrans/model.h"

#include <fstream>
#include <random>

namespace monotrans {

void ModelConfig::Validate() const {
  auto need = [](bool ok, const char *field) {
    if (!ok)
      throw Error("invalid-arguments",
                  std::string("invalid model config field: ") + field);
  };
  need(vocab_size >= 1, "vocab_size");
  need(context_k >= 1, "context_k");
  need(feat_dim >= 1, "feat_dim");
  need(enc_layers >= 1, "enc_layers");
  need(enc_dim >= 1, "enc_dim");
  need(enc_context >= 0, "enc_context");
  need(pred_dim >= 1, "pred_dim");
  need(joint_dim >= 1, "joint_dim");
  need(subsample >= 1, "subsample");
  need(dropout >= 0.0 && dropout < 1.0, "dropout");
  need(aux_middle_layer >= 0 && aux_middle_layer < enc_layers,
       "aux_middle_layer");
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(const ModelConfig &cfg, const std::string &prefix,
                 ParamStore *store)
    : cfg_(cfg) {
  for (int l = 0; l < cfg.enc_layers; ++l) {
    int stride = l == 0 ? cfg.subsample : 1;
    int in_dim = l == 0 ? cfg.feat_dim : cfg.enc_dim;
    int width = (stride + 2 * cfg.enc_context) * in_dim;
    std::string name = prefix + std::to_string(l);
    weight_.push_back(store->Add(name + ".weight", width, cfg.enc_dim));
    bias_.push_back(store->Add(name + ".bias", 1, cfg.enc_dim));
  }
}

Matrix Encoder::Window(const Matrix &x, int layer, int32_t out_frames) const {
  const int stride = layer == 0 ? cfg_.subsample : 1;
  const int span = stride + 2 * cfg_.enc_context;
  const int dim = static_cast<int>(x.cols());
  const int32_t in_frames = static_cast<int32_t>(x.rows());
  Matrix win = Matrix::Zero(out_frames, static_cast<Eigen::Index>(span) * dim);
  for (int32_t t = 0; t < out_frames; ++t)
    for (int j = 0; j < span; ++j) {
      int32_t src = t * stride - cfg_.enc_context + j;
      if (src < 0 || src >= in_frames) continue;
      win.row(t).segment(static_cast<Eigen::Index>(j) * dim, dim) = x.row(src);
    }
  return win;
}

void Encoder::ScatterWindow(const Matrix &d_win, int layer, Matrix *d_x) const {
  const int stride = layer == 0 ? cfg_.subsample : 1;
  const int span = stride + 2 * cfg_.enc_context;
  const int dim = static_cast<int>(d_x->cols());
  const int32_t in_frames = static_cast<int32_t>(d_x->rows());
  for (int32_t t = 0; t < d_win.rows(); ++t)
    for (int j = 0; j < span; ++j) {
      int32_t src = t * stride - cfg_.enc_context + j;
      if (src < 0 || src >= in_frames) continue;
      d_x->row(src) +=
          d_win.row(t).segment(static_cast<Eigen::Index>(j) * dim, dim);
    }
}

EncoderOutput Encoder::Forward(const ParamStore &store, const Matrix &feats,
                               const DropoutSpec &dropout,
                               EncoderCache *cache) const {
  const int32_t out_frames =
      cfg_.SubsampledFrames(static_cast<int32_t>(feats.rows()));
  const double rate = dropout.rate >= 0.0 ? dropout.rate : cfg_.dropout;
  if (rate >= 1.0) throw Error("invalid-arguments", "dropout rate must be < 1");
  const bool use_dropout = dropout.train && rate > 0.0;
  std::mt19937_64 rng(dropout.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);

  if (cache) {
    cache->valid = true;
    cache->inputs.clear();
    cache->outputs.clear();
    cache->masks.clear();
    cache->num_input_frames = static_cast<int32_t>(feats.rows());
  }
  EncoderOutput out;
  Matrix x = feats;
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    Matrix win = Window(x, l, out_frames);
    Matrix y = win * store[weight_[l]].value;
    y.rowwise() += store[bias_[l]].value.row(0);
    y = y.array().tanh().matrix();
    Matrix mask;
    if (use_dropout) {
      mask.resize(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = unif(rng) < rate ? 0.0 : keep_scale;
      x = y.cwiseProduct(mask);
    } else {
      x = y;
    }
    if (l == cfg_.aux_middle_layer) out.middle = x;
    if (cache) {
      cache->inputs.push_back(std::move(win));
      cache->outputs.push_back(std::move(y));
      cache->masks.push_back(std::move(mask));
    }
  }
  out.h = std::move(x);
  return out;
}

void Encoder::Backward(ParamStore *store, const EncoderCache &cache,
                       const Matrix &d_h, const Matrix &d_middle) const {
  if (!cache.valid)
    throw Error("missing-cache", "encoder backward without forward cache");
  Matrix d_out = d_h;
  for (int l = cfg_.enc_layers - 1; l >= 0; --l) {
    if (l == cfg_.aux_middle_layer && d_middle.size() > 0) d_out += d_middle;
    const Matrix &y = cache.outputs[l];
    Matrix d_y = cache.masks[l].size() > 0 ? d_out.cwiseProduct(cache.masks[l])
                                           : d_out;
    Matrix d_pre =
        d_y.cwiseProduct((1.0 - y.array().square()).matrix());
    Param &w = (*store)[weight_[l]];
    w.grad.noalias() += cache.inputs[l].transpose() * d_pre;
    (*store)[bias_[l]].grad.row(0) += d_pre.colwise().sum();
    if (l == 0) break;
    Matrix d_win = d_pre * w.value.transpose();
    Matrix d_prev = Matrix::Zero(cache.outputs[l - 1].rows(), cfg_.enc_dim);
    ScatterWindow(d_win, l, &d_prev);
    d_out = std::move(d_prev);
  }
}

// -------------------------------------------------------- TransducerModel

TransducerModel::TransducerModel(const ModelConfig &cfg, uint64_t seed)
    : cfg_(cfg) {
  cfg.Validate();
  const int V1 = cfg.NumOutputs();
  encoder_ = Encoder(cfg, "enc.", &store_);
  emb_ = store_.Add("pred.embedding", V1, cfg.pred_dim);
  pred_w_ = store_.Add("pred.weight", cfg.context_k * cfg.pred_dim, cfg.pred_dim);
  pred_b_ = store_.Add("pred.bias", 1, cfg.pred_dim);
  joint_enc_ = store_.Add("joint.enc_proj", cfg.enc_dim, cfg.joint_dim);
  joint_pred_ = store_.Add("joint.pred_proj", cfg.pred_dim, cfg.joint_dim);
  joint_b_ = store_.Add("joint.bias", 1, cfg.joint_dim);
  out_w_ = store_.Add("joint.out.weight", cfg.joint_dim, V1);
  out_b_ = store_.Add("joint.out.bias", 1, V1);
  if (cfg.aux_heads) {
    aux_final_w_ = store_.Add("aux.final.weight", cfg.enc_dim, V1);
    aux_final_b_ = store_.Add("aux.final.bias", 1, V1);
    aux_mid_w_ = store_.Add("aux.middle.weight", cfg.enc_dim, V1);
    aux_mid_b_ = store_.Add("aux.middle.bias", 1, V1);
  }
  store_.InitUniform(seed);
}

void TransducerModel::CheckCache(bool valid, const char *what) const {
  if (!valid)
    throw Error("missing-cache",
                std::string(what) + " backward called without a forward cache");
}

EncoderOutput TransducerModel::Encode(const Matrix &feats,
                                      const DropoutSpec &dropout,
                                      EncoderCache *cache) const {
  if (feats.rows() == 0)
    throw Error("invalid-arguments", "empty feature sequence");
  if (feats.rows() < cfg_.subsample)
    throw Error("invalid-arguments",
                "fewer input frames than the subsampling factor");
  if (feats.cols() != cfg_.feat_dim)
    throw Error("invalid-arguments", "feature dimension mismatch");
  return encoder_.Forward(store_, feats, dropout, cache);
}

std::vector<Label> TransducerModel::HistoryIds(const LabelSeq &labels) const {
  const int k = cfg_.context_k;
  std::vector<Label> ids(k, cfg_.vocab_size);
  const int n = static_cast<int>(labels.size());
  for (int j = 0; j < k; ++j) {
    int src = n - k + j;
    if (src >= 0) ids[j] = labels[src];
  }
  return ids;
}

std::vector<std::vector<Label>> TransducerModel::Histories(
    const LabelSeq &target, const LabelSeq &seed) const {
  LabelSeq full = seed;
  std::vector<std::vector<Label>> out;
  out.reserve(target.size() + 1);
  out.push_back(HistoryIds(full));
  for (Label a : target) {
    full.push_back(a);
    out.push_back(HistoryIds(full));
  }
  return out;
}

Matrix TransducerModel::JointCells(const EncoderOutput &enc,
                                   const LabelSeq &target,
                                   const std::vector<Cell> &cells,
                                   JointCache *cache,
                                   const LabelSeq &seed) const {
  const int k = cfg_.context_k, P = cfg_.pred_dim;
  const int32_t S = static_cast<int32_t>(target.size());
  const int32_t T = static_cast<int32_t>(enc.h.rows());
  for (Label a : target)
    if (a < 0 || a >= cfg_.vocab_size)
      throw Error("invalid-arguments", "target label out of range");

  auto histories = Histories(target, seed);
  const Matrix &emb = store_[emb_].value;
  Matrix pred_in(S + 1, k * P);
  for (int32_t s = 0; s <= S; ++s)
    for (int j = 0; j < k; ++j)
      pred_in.row(s).segment(j * P, P) = emb.row(histories[s][j]);
  Matrix pred_out = pred_in * store_[pred_w_].value;
  pred_out.rowwise() += store_[pred_b_].value.row(0);
  pred_out = pred_out.array().tanh().matrix();

  Matrix enc_proj = enc.h * store_[joint_enc_].value;
  Matrix hist_proj = pred_out * store_[joint_pred_].value;
  hist_proj.rowwise() += store_[joint_b_].value.row(0);

  Matrix z(static_cast<Eigen::Index>(cells.size()), cfg_.joint_dim);
  for (size_t i = 0; i < cells.size(); ++i) {
    const Cell &c = cells[i];
    if (c.t < 0 || c.t >= T || c.s < 0 || c.s > S)
      throw Error("invalid-arguments", "joint cell out of range");
    z.row(i) = (enc_proj.row(c.t) + hist_proj.row(c.s)).array().tanh();
  }
  Matrix log_probs = z * store_[out_w_].value;
  log_probs.rowwise() += store_[out_b_].value.row(0);
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i)
    LogSoftmaxInPlace(log_probs.row(i).data(), cfg_.NumOutputs());

  if (cache) {
    cache->valid = true;
    cache->cells = cells;
    cache->enc_h = enc.h;
    cache->histories = std::move(histories);
    cache->pred_in = std::move(pred_in);
    cache->pred_out = std::move(pred_out);
    cache->z = std::move(z);
    cache->log_probs = log_probs;
  }
  return log_probs;
}

LogLattice TransducerModel::JointLattice(const EncoderOutput &enc,
                                         const LabelSeq &target,
                                         JointCache *cache,
                                         const LabelSeq &seed) const {
  const int32_t T = static_cast<int32_t>(enc.h.rows());
  const int32_t S = static_cast<int32_t>(target.size());
  std::vector<Cell> cells;
  cells.reserve(static_cast<size_t>(T) * (S + 1));
  for (int32_t t = 0; t < T; ++t)
    for (int32_t s = 0; s <= S; ++s) cells.push_back({t, s});
  Matrix rows = JointCells(enc, target, cells, cache, seed);
  LogLattice lattice(T, S, cfg_.vocab_size);
  std::copy(rows.data(), rows.data() + rows.size(), lattice.Data().begin());
  return lattice;
}

void TransducerModel::JointBackward(const JointCache &cache,
                                    const Matrix &d_rows, Matrix *d_h) {
  CheckCache(cache.valid, "joint");
  const int k = cfg_.context_k, P = cfg_.pred_dim;
  const Eigen::Index n = static_cast<Eigen::Index>(cache.cells.size());
  if (d_rows.rows() != n || d_rows.cols() != cfg_.NumOutputs())
    throw Error("invalid-arguments", "joint gradient shape mismatch");

  // log-softmax backward
  Matrix probs = cache.log_probs.array().exp().matrix();
  Vector row_sum = d_rows.rowwise().sum();
  Matrix d_logits = d_rows - probs.cwiseProduct(row_sum.replicate(1, probs.cols()));

  Param &out_w = store_[out_w_];
  out_w.grad.noalias() += cache.z.transpose() * d_logits;
  store_[out_b_].grad.row(0) += d_logits.colwise().sum();
  Matrix d_z = d_logits * out_w.value.transpose();
  Matrix d_pre = d_z.cwiseProduct((1.0 - cache.z.array().square()).matrix());
  store_[joint_b_].grad.row(0) += d_pre.colwise().sum();

  Matrix d_enc_proj = Matrix::Zero(cache.enc_h.rows(), cfg_.joint_dim);
  Matrix d_hist_proj = Matrix::Zero(cache.pred_out.rows(), cfg_.joint_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_enc_proj.row(cache.cells[i].t) += d_pre.row(i);
    d_hist_proj.row(cache.cells[i].s) += d_pre.row(i);
  }
  Param &je = store_[joint_enc_];
  je.grad.noalias() += cache.enc_h.transpose() * d_enc_proj;
  if (d_h) {
    if (d_h->rows() != cache.enc_h.rows() || d_h->cols() != cfg_.enc_dim)
      throw Error("invalid-arguments", "encoder gradient shape mismatch");
    d_h->noalias() += d_enc_proj * je.value.transpose();
  }

  Param &jp = store_[joint_pred_];
  jp.grad.noalias() += cache.pred_out.transpose() * d_hist_proj;
  Matrix d_pred_out = d_hist_proj * jp.value.transpose();
  Matrix d_pred_pre =
      d_pred_out.cwiseProduct((1.0 - cache.pred_out.array().square()).matrix());
  Param &pw = store_[pred_w_];
  pw.grad.noalias() += cache.pred_in.transpose() * d_pred_pre;
  store_[pred_b_].grad.row(0) += d_pred_pre.colwise().sum();
  Matrix d_pred_in = d_pred_pre * pw.value.transpose();
  Param &emb = store_[emb_];
  for (Eigen::Index s = 0; s < d_pred_in.rows(); ++s)
    for (int j = 0; j < k; ++j)
      emb.grad.row(cache.histories[s][j]) += d_pred_in.row(s).segment(j * P, P);
}

void TransducerModel::JointBackward(const JointCache &cache,
                                    const LogLattice &d_lattice, Matrix *d_h) {
  CheckCache(cache.valid, "joint");
  const Eigen::Index n = static_cast<Eigen::Index>(cache.cells.size());
  if (static_cast<size_t>(n) * d_lattice.NumOutputs() != d_lattice.Data().size())
    throw Error("invalid-arguments",
                "lattice gradient does not match the cached joint cells");
  Eigen::Map<const Matrix> rows(d_lattice.Data().data(), n,
                                d_lattice.NumOutputs());
  JointBackward(cache, Matrix(rows), d_h);
}

void TransducerModel::EncoderBackward(const EncoderCache &cache,
                                      const Matrix &d_h,
                                      const Matrix &d_middle) {
  encoder_.Backward(&store_, cache, d_h, d_middle);
}

Matrix TransducerModel::AuxLogProbs(const Matrix &x, AuxHead head,
                                    AuxCache *cache) const {
  if (!cfg_.aux_heads)
    throw Error("missing-head", "model has no auxiliary CE heads");
  int w = head == AuxHead::kFinal ? aux_final_w_ : aux_mid_w_;
  int b = head == AuxHead::kFinal ? aux_final_b_ : aux_mid_b_;
  Matrix log_probs = x * store_[w].value;
  log_probs.rowwise() += store_[b].value.row(0);
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i)
    LogSoftmaxInPlace(log_probs.row(i).data(), cfg_.NumOutputs());
  if (cache) {
    cache->valid = true;
    cache->input = x;
    cache->log_probs = log_probs;
  }
  return log_probs;
}

void TransducerModel::AuxBackward(const AuxCache &cache, AuxHead head,
                                  const Matrix &d_rows, Matrix *d_x) {
  CheckCache(cache.valid, "aux head");
  if (!cfg_.aux_heads)
    throw Error("missing-head", "model has no auxiliary CE heads");
  int w = head == AuxHead::kFinal ? aux_final_w_ : aux_mid_w_;
  int b = head == AuxHead::kFinal ? aux_final_b_ : aux_mid_b_;
  Matrix probs = cache.log_probs.array().exp().matrix();
  Vector row_sum = d_rows.rowwise().sum();
  Matrix d_logits =
      d_rows - probs.cwiseProduct(row_sum.replicate(1, probs.cols()));
  store_[w].grad.noalias() += cache.input.transpose() * d_logits;
  store_[b].grad.row(0) += d_logits.colwise().sum();
  if (d_x) d_x->noalias() += d_logits * store_[w].value.transpose();
}

Vector TransducerModel::ProjectHistory(
    const std::vector<Label> &history_ids) const {
  const int k = cfg_.context_k, P = cfg_.pred_dim;
  const Matrix &emb = store_[emb_].value;
  Eigen::RowVectorXd in(k * P);
  for (int j = 0; j < k; ++j) in.segment(j * P, P) = emb.row(history_ids[j]);
  Eigen::RowVectorXd g = in * store_[pred_w_].value + store_[pred_b_].value;
  g = g.array().tanh();
  Eigen::RowVectorXd proj = g * store_[joint_pred_].value + store_[joint_b_].value;
  return proj.transpose();
}

Matrix TransducerModel::ProjectEncoder(const EncoderOutput &enc) const {
  return enc.h * store_[joint_enc_].value;
}

void TransducerModel::OutputLogProbs(const double *enc_proj,
                                     const Vector &hist_proj,
                                     double *out) const {
  const int J = cfg_.joint_dim, V1 = cfg_.NumOutputs();
  Eigen::RowVectorXd z(J);
  for (int j = 0; j < J; ++j)
    z[j] = std::tanh((enc_proj ? enc_proj[j] : 0.0) + hist_proj[j]);
  Eigen::Map<Eigen::RowVectorXd> logits(out, V1);
  logits = z * store_[out_w_].value + store_[out_b_].value;
  LogSoftmaxInPlace(out, V1);
}

std::vector<double> TransducerModel::IlmLabelLogProbs(
    const LabelSeq &history) const {
  Vector proj = ProjectHistory(HistoryIds(history));
  std::vector<double> row(cfg_.NumOutputs());
  OutputLogProbs(nullptr, proj, row.data());
  row.pop_back();  // blank
  LogSoftmaxInPlace(row.data(), cfg_.vocab_size);
  return row;
}

// ---------------------------------------------------------------- CtcModel

CtcModel::CtcModel(const ModelConfig &cfg, uint64_t seed) : cfg_(cfg) {
  cfg.Validate();
  encoder_ = Encoder(cfg, "enc.", &store_);
  out_w_ = store_.Add("ctc.out.weight", cfg.enc_dim, cfg.NumOutputs());
  out_b_ = store_.Add("ctc.out.bias", 1, cfg.NumOutputs());
  store_.InitUniform(seed);
}

Matrix CtcModel::LogProbs(const Matrix &feats, const DropoutSpec &dropout,
                          Cache *cache) const {
  if (feats.rows() == 0 || feats.rows() < cfg_.subsample)
    throw Error("invalid-arguments", "too few input frames");
  if (feats.cols() != cfg_.feat_dim)
    throw Error("invalid-arguments", "feature dimension mismatch");
  EncoderOutput enc =
      encoder_.Forward(store_, feats, dropout, cache ? &cache->enc : nullptr);
  Matrix log_probs = enc.h * store_[out_w_].value;
  log_probs.rowwise() += store_[out_b_].value.row(0);
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i)
    LogSoftmaxInPlace(log_probs.row(i).data(), cfg_.NumOutputs());
  if (cache) {
    cache->h = std::move(enc.h);
    cache->log_probs = log_probs;
  }
  return log_probs;
}

void CtcModel::Backward(const Cache &cache, const Matrix &d_log_probs) {
  if (!cache.enc.valid)
    throw Error("missing-cache", "CTC backward without forward cache");
  Matrix probs = cache.log_probs.array().exp().matrix();
  Vector row_sum = d_log_probs.rowwise().sum();
  Matrix d_logits =
      d_log_probs - probs.cwiseProduct(row_sum.replicate(1, probs.cols()));
  store_[out_w_].grad.noalias() += cache.h.transpose() * d_logits;
  store_[out_b_].grad.row(0) += d_logits.colwise().sum();
  Matrix d_h = d_logits * store_[out_w_].value.transpose();
  encoder_.Backward(&store_, cache.enc, d_h, Matrix());
}

// ------------------------------------------------------------- Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'T', 'R', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

void WriteConfig(std::ostream &os, const ModelConfig &c) {
  for (int64_t v : {int64_t{c.vocab_size}, int64_t{c.context_k},
                    int64_t{c.feat_dim}, int64_t{c.enc_layers},
                    int64_t{c.enc_dim}, int64_t{c.enc_context},
                    int64_t{c.pred_dim}, int64_t{c.joint_dim},
                    int64_t{c.subsample}, int64_t{c.aux_middle_layer},
                    int64_t{c.aux_heads ? 1 : 0}})
    binio::WriteI64(os, v);
  binio::WriteF64(os, c.dropout);
}

ModelConfig ReadConfig(std::istream &is) {
  ModelConfig c;
  auto next = [&]() { return static_cast<int32_t>(binio::ReadI64(is)); };
  c.vocab_size = next();
  c.context_k = next();
  c.feat_dim = next();
  c.enc_layers = next();
  c.enc_dim = next();
  c.enc_context = next();
  c.pred_dim = next();
  c.joint_dim = next();
  c.subsample = next();
  c.aux_middle_layer = next();
  c.aux_heads = next() != 0;
  c.dropout = binio::ReadF64(is);
  c.Validate();
  return c;
}

std::ifstream OpenForRead(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing-file", "cannot open checkpoint " + path);
  return is;
}

void WriteFile(const std::string &path, ModelKind kind, const ModelConfig &cfg,
               const ParamStore &store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("io", "cannot write checkpoint " + path);
  SaveCheckpoint(os, kind, cfg, store);
  if (!os) throw Error("io", "short write to " + path);
}

}  // namespace

void SaveCheckpoint(std::ostream &os, ModelKind kind, const ModelConfig &cfg,
                    const ParamStore &store) {
  os.write(kMagic, sizeof(kMagic));
  binio::WriteU32(os, kCheckpointVersion);
  binio::WriteU32(os, static_cast<uint32_t>(kind));
  WriteConfig(os, cfg);
  WriteTensors(os, store);
}

std::pair<ModelKind, ModelConfig> ReadCheckpointHeader(std::istream &is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) ||
      !std::equal(magic, magic + 8, kMagic))
    throw Error("format", "not a monotrans checkpoint");
  uint32_t version = binio::ReadU32(is);
  if (version != kCheckpointVersion)
    throw Error("format",
                "unsupported checkpoint version " + std::to_string(version));
  uint32_t kind = binio::ReadU32(is);
  if (kind != static_cast<uint32_t>(ModelKind::kTransducer) &&
      kind != static_cast<uint32_t>(ModelKind::kCtc))
    throw Error("format", "unknown model kind in checkpoint");
  return {static_cast<ModelKind>(kind), ReadConfig(is)};
}

void SaveCheckpoint(const std::string &path, const TransducerModel &model) {
  WriteFile(path, ModelKind::kTransducer, model.Config(), model.Params());
}

void SaveCheckpoint(const std::string &path, const CtcModel &model) {
  WriteFile(path, ModelKind::kCtc, model.Config(), model.Params());
}

TransducerModel LoadTransducer(const std::string &path) {
  std::ifstream is = OpenForRead(path);
  auto [kind, cfg] = ReadCheckpointHeader(is);
  if (kind != ModelKind::kTransducer)
    throw Error("format", path + " is not a transducer checkpoint");
  TransducerModel model(cfg, 0);
  ReadTensors(is, &model.Params());
  return model;
}

CtcModel LoadCtc(const std::string &path) {
  std::ifstream is = OpenForRead(path);
  auto [kind, cfg] = ReadCheckpointHeader(is);
  if (kind != ModelKind::kCtc)
    throw Error("format", path + " is not a CTC checkpoint");
  CtcModel model(cfg, 0);
  ReadTensors(is, &model.Params());
  return model;
}

}  // namespace monotrans
