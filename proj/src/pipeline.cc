// monotrans/pipeline.cc

#include "monotrans/pipeline.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "monotrans/ctc.h"

namespace monotrans {

namespace fs = std::filesystem;

namespace {

void Require(const std::string &path, const std::string &what) {
  if (!fs::exists(path))
    throw Error("missing-artifact", what + " not found: " + path);
}

int32_t Limit(int64_t v) { return v <= 0 ? kNoLimit : static_cast<int32_t>(v); }

Dataset LoadSplit(const Config &cfg, const std::string &split, bool filter) {
  WorkPaths paths(cfg.Str("work_dir"));
  Require(paths.Data(split) + "/manifest.txt", split + " dataset");
  Dataset data = ReadDataset(paths.Data(split));
  if (filter) {
    FilterReport rep;
    data.utts = LengthFilter(data.utts, Limit(cfg.Int("data.max_frames")),
                             Limit(cfg.Int("data.max_labels")),
                             static_cast<int32_t>(cfg.Int("model.subsample")), &rep);
    if (rep.too_long + rep.too_many + rep.infeasible > 0)
      spdlog::info("{}: kept {} utterances, dropped {} long, {} with many labels, "
                   "{} infeasible",
                   split, rep.kept, rep.too_long, rep.too_many, rep.infeasible);
  }
  return data;
}

std::map<std::string, AlignmentPath> LoadAlignments(const std::string &path,
                                                    int32_t vocab) {
  std::ifstream is(path);
  if (!is) throw Error("missing-artifact", "alignments not found: " + path);
  return ReadAlignments(is, vocab);
}

uint64_t MixSeed(uint64_t base, uint64_t a, uint64_t b = 0) {
  return SplitMix64(base ^ SplitMix64(a * 0x100000001B3ull + b + 1));
}

void WriteMetricsLine(std::ofstream &os, const EpochMetrics &m) {
  os << m.epoch << '\t' << FormatExact(m.train_loss) << '\t'
     << FormatExact(m.dev_loss) << '\t' << FormatExact(m.lr) << '\n';
  os.flush();
}

using BatchFn = std::function<BatchLoss(const std::vector<size_t> &batch,
                                        uint64_t batch_seed)>;
using ScoreFn = std::function<double()>;

struct LoopOptions {
  std::string dir;
  int epochs = 0;
  ScheduleSpec schedule;
  double l2 = 5e-6;
  uint64_t seed = 0;
  std::vector<int32_t> sizes;  // per training item, for batching
  int64_t batch_size = 1;
  ScoreFn after_epoch;  // optional, e.g. stage-3 expected risk
};

// Shared loop: seeded batching, scheduled updates, per-epoch dev score,
// best-checkpoint tracking (the initial model is candidate epoch 0).
template <typename Model>
StageResult TrainLoop(Model *model, const LoopOptions &opt, const BatchFn &batch_fn,
                      const ScoreFn &dev_score) {
  fs::create_directories(opt.dir);
  const std::string best_path = opt.dir + "/best.ckpt";
  const std::string final_path = opt.dir + "/final.ckpt";

  std::vector<std::vector<std::vector<size_t>>> plan;
  int64_t total_steps = 0;
  for (int e = 1; e <= opt.epochs; ++e) {
    plan.push_back(MakeBatches(opt.sizes, opt.batch_size, MixSeed(opt.seed, 0, e)));
    total_steps += static_cast<int64_t>(plan.back().size());
  }
  ScheduleSpec sched = opt.schedule;
  sched.total_steps = std::max<int64_t>(total_steps, 1);
  sched.Validate();

  OptimizerState state;
  state.options.l2 = opt.l2;
  state.Init(model->Params());

  StageResult result;
  result.best_score = dev_score();
  result.best_epoch = 0;
  SaveCheckpoint(best_path, *model);
  if (opt.after_epoch) result.risk.push_back(opt.after_epoch());
  spdlog::info("{}: epoch 0 dev {:.6f}", opt.dir, result.best_score);

  std::ofstream metrics(opt.dir + "/metrics.tsv", std::ios::trunc);
  int64_t step = 0;
  for (int e = 1; e <= opt.epochs; ++e) {
    double loss_sum = 0.0;
    int64_t used = 0;
    double lr = LrAt(sched, step);
    for (const auto &batch : plan[e - 1]) {
      BatchLoss b = batch_fn(batch, MixSeed(opt.seed, e, step));
      if (b.used == 0) continue;
      lr = LrAt(sched, step);
      StepUpdate(&model->Params(), &state, lr);
      ++step;
      loss_sum += b.loss * b.used;
      used += b.used;
    }
    EpochMetrics m;
    m.epoch = e;
    m.train_loss = used > 0 ? loss_sum / static_cast<double>(used) : 0.0;
    m.dev_loss = dev_score();
    m.lr = lr;
    result.epochs.push_back(m);
    WriteMetricsLine(metrics, m);
    if (m.dev_loss < result.best_score) {
      result.best_score = m.dev_loss;
      result.best_epoch = e;
      SaveCheckpoint(best_path, *model);
    }
    if (opt.after_epoch) result.risk.push_back(opt.after_epoch());
    spdlog::info("{}: epoch {} train {:.6f} dev {:.6f} lr {:.3g}", opt.dir, e,
                 m.train_loss, m.dev_loss, m.lr);
  }
  SaveCheckpoint(final_path, *model);
  return result;
}

double DevFsLoss(const TransducerModel &model, const Dataset &dev) {
  double total = 0.0;
  int used = 0;
  for (const auto &u : dev.utts) {
    EncoderOutput enc = model.Encode(u.feats, DropoutSpec{});
    if (static_cast<Eigen::Index>(u.reference.size()) > enc.h.rows()) continue;
    double lp = FullSumLogProb(model.JointLattice(enc, u.reference), u.reference);
    if (lp == kLogZero) continue;
    total -= lp;
    ++used;
  }
  return used > 0 ? total / used : 0.0;
}

double DevWer(const TransducerModel &model, const Dataset &dev, const Config &cfg) {
  DecodeConfig dc = DecodeConfigFrom(cfg);
  dc.lm_scale = 0.0;
  dc.ilm_scale = 0.0;
  return Evaluate(model, nullptr, dev, dc).wer;
}

}  // namespace

SyntheticSpec SyntheticSpecFrom(const Config &cfg) {
  SyntheticSpec s;
  s.seed = static_cast<uint64_t>(cfg.Int("seed"));
  s.vocab = static_cast<int32_t>(cfg.Int("data.vocab"));
  s.num_train = static_cast<int32_t>(cfg.Int("data.num_train"));
  s.num_dev = static_cast<int32_t>(cfg.Int("data.num_dev"));
  s.num_test = static_cast<int32_t>(cfg.Int("data.num_test"));
  s.min_len = static_cast<int32_t>(cfg.Int("data.min_len"));
  s.max_len = static_cast<int32_t>(cfg.Int("data.max_len"));
  s.min_frames_per_label = static_cast<int32_t>(cfg.Int("data.min_frames_per_label"));
  s.max_frames_per_label = static_cast<int32_t>(cfg.Int("data.max_frames_per_label"));
  s.feat_dim = static_cast<int32_t>(cfg.Int("data.feat_dim"));
  s.noise_sigma = cfg.Double("data.noise_sigma");
  s.grammar_sharpness = cfg.Double("data.grammar_sharpness");
  s.Validate();
  return s;
}

ModelConfig ModelConfigFrom(const Config &cfg, int32_t vocab, int32_t feat_dim) {
  ModelConfig m;
  m.vocab_size = vocab;
  m.feat_dim = feat_dim;
  m.context_k = static_cast<int32_t>(cfg.Int("model.context_k"));
  m.enc_layers = static_cast<int32_t>(cfg.Int("model.enc_layers"));
  m.enc_dim = static_cast<int32_t>(cfg.Int("model.enc_dim"));
  m.enc_context = static_cast<int32_t>(cfg.Int("model.enc_context"));
  m.pred_dim = static_cast<int32_t>(cfg.Int("model.pred_dim"));
  m.joint_dim = static_cast<int32_t>(cfg.Int("model.joint_dim"));
  m.subsample = static_cast<int32_t>(cfg.Int("model.subsample"));
  m.dropout = cfg.Double("model.dropout");
  m.aux_middle_layer = static_cast<int32_t>(cfg.Int("model.aux_middle_layer"));
  m.aux_heads = cfg.Bool("model.aux_heads");
  m.Validate();
  return m;
}

LossWeights LossWeightsFrom(const Config &cfg) {
  LossWeights w;
  w.label_smooth = cfg.Double("loss.label_smooth");
  w.boost_scale = cfg.Double("loss.boost_scale");
  w.focal_gamma = cfg.Double("loss.focal_gamma");
  w.enc_scale = cfg.Double("loss.enc_scale");
  w.middle_scale = cfg.Double("loss.middle_scale");
  w.fs_aux_scale = cfg.Double("stage3.fs_aux_scale");
  w.clip_norm = cfg.Double("loss.clip_norm");
  if (!cfg.Bool("model.aux_heads")) w.enc_scale = w.middle_scale = 0.0;
  w.Validate();
  return w;
}

MaskSpec MaskSpecFrom(const Config &cfg) {
  MaskSpec m;
  m.time_masks = static_cast<int32_t>(cfg.Int("mask.time_masks"));
  m.time_width = static_cast<int32_t>(cfg.Int("mask.time_width"));
  m.feat_masks = static_cast<int32_t>(cfg.Int("mask.feat_masks"));
  m.feat_width = static_cast<int32_t>(cfg.Int("mask.feat_width"));
  return m;
}

DecodeConfig DecodeConfigFrom(const Config &cfg) {
  DecodeConfig dc;
  dc.beam_size = static_cast<int>(cfg.Int("decode.beam"));
  dc.lm_scale = cfg.Double("decode.lm_scale");
  dc.ilm_scale = cfg.Double("decode.ilm_scale");
  const std::string &lex = cfg.Str("decode.lexicon");
  if (!lex.empty()) {
    std::ifstream is(lex);
    if (!is) throw Error("missing-file", "cannot open lexicon " + lex);
    dc.w_mapping = WMapping::ReadLexicon(is);
  }
  dc.Validate();
  return dc;
}

std::vector<std::vector<size_t>> MakeBatches(const std::vector<int32_t> &frames,
                                             int64_t batch_frames, uint64_t seed) {
  if (batch_frames < 1) throw Error("invalid-arguments", "batch size must be >= 1");
  std::vector<size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> cur;
  int64_t acc = 0;
  for (size_t idx : order) {
    cur.push_back(idx);
    acc += frames[idx];
    if (acc >= batch_frames) {
      batches.push_back(std::move(cur));
      cur.clear();
      acc = 0;
    }
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

NgramLm LoadLm(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error("missing-artifact", "language model not found: " + path);
  return NgramLm::ReadArpa(is);
}

void SaveLm(const std::string &path, const NgramLm &lm) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot write " + path);
  lm.WriteArpa(os);
}

void GenData(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  Corpus corpus = Generate(SyntheticSpecFrom(cfg));
  WriteDataset(paths.Data("train"), corpus.train);
  WriteDataset(paths.Data("dev"), corpus.dev);
  WriteDataset(paths.Data("test"), corpus.test);
  spdlog::info("wrote {} / {} / {} utterances under {}", corpus.train.utts.size(),
               corpus.dev.utts.size(), corpus.test.utts.size(), paths.root + "/data");
}

void TrainLms(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  Dataset train = LoadSplit(cfg, "train", false);
  DecodeConfig dc = DecodeConfigFrom(cfg);
  std::vector<NgramLm::Sentence> corpus;
  for (const auto &u : train.utts) corpus.push_back(dc.w_mapping.Apply(u.reference));
  const double discount = cfg.Double("lm.discount");
  SaveLm(paths.Lm(), NgramLm::Train(corpus, static_cast<int>(cfg.Int("lm.order")),
                                    discount));
  SaveLm(paths.GenLm(),
         NgramLm::Train(corpus, static_cast<int>(cfg.Int("lm.gen_order")), discount));
}

StageResult TrainCtc(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  Dataset train = LoadSplit(cfg, "train", true);
  Dataset dev = LoadSplit(cfg, "dev", true);
  const uint64_t seed = static_cast<uint64_t>(cfg.Int("seed"));
  CtcModel model(ModelConfigFrom(cfg, train.vocab, train.feat_dim), MixSeed(seed, 100));
  const MaskSpec masks = MaskSpecFrom(cfg);
  const double clip = cfg.Double("loss.clip_norm");

  LoopOptions opt;
  opt.dir = paths.CtcDir();
  opt.epochs = static_cast<int>(cfg.Int("ctc.epochs"));
  opt.schedule.kind = ScheduleKind::kOclrStage1;
  opt.schedule.lr_peak = cfg.Double("ctc.lr_peak");
  opt.schedule.lr_final = cfg.Double("optim.lr_final");
  opt.l2 = cfg.Double("optim.l2");
  opt.seed = MixSeed(seed, 101);
  opt.batch_size = cfg.Int("ctc.batch_frames");
  for (const auto &u : train.utts) opt.sizes.push_back(u.NumFrames());

  auto usable = [&](const Utterance &u) {
    return CtcMinFrames(u.reference) <= model.Config().SubsampledFrames(u.NumFrames());
  };
  BatchFn batch_fn = [&](const std::vector<size_t> &batch, uint64_t bseed) {
    model.Params().ZeroGrad();
    BatchLoss out;
    int n = 0;
    for (size_t i : batch) n += usable(train.utts[i]) ? 1 : 0;
    if (n == 0) {
      out.skipped = static_cast<int>(batch.size());
      return out;
    }
    for (size_t i : batch) {
      const Utterance &u = train.utts[i];
      if (!usable(u)) {
        ++out.skipped;
        continue;
      }
      Matrix feats = MaskAugment(u.feats, masks, MixSeed(bseed, i, 1));
      CtcModel::Cache cache;
      Matrix lp = model.LogProbs(feats, DropoutSpec{true, MixSeed(bseed, i, 2)}, &cache);
      CtcResult r = CtcFullSum(lp, u.reference);
      if (r.log_prob == kLogZero) {
        ++out.skipped;
        continue;
      }
      out.loss -= r.log_prob;
      ++out.used;
      model.Backward(cache, r.grad * (-1.0 / n));
    }
    if (out.used > 0) out.loss /= out.used;
    out.grad_norm = ClipGradNorm(&model.Params(), clip);
    return out;
  };
  ScoreFn dev_fn = [&]() {
    double total = 0.0;
    int used = 0;
    for (const auto &u : dev.utts) {
      if (!usable(u)) continue;
      double lp = CtcFullSum(model.LogProbs(u.feats, DropoutSpec{}), u.reference).log_prob;
      if (lp == kLogZero) continue;
      total -= lp;
      ++used;
    }
    return used > 0 ? total / used : 0.0;
  };
  return TrainLoop(&model, opt, batch_fn, dev_fn);
}

AlignReport Align(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  const std::string ckpt = paths.Best(paths.CtcDir());
  Require(ckpt, "CTC checkpoint");
  CtcModel model = LoadCtc(ckpt);
  AlignReport rep;
  for (const std::string split : {"train", "dev"}) {
    Dataset data = LoadSplit(cfg, split, true);
    std::map<std::string, AlignmentPath> alignments;
    for (const auto &u : data.utts) {
      Matrix lp = model.LogProbs(u.feats, DropoutSpec{});
      if (CtcMinFrames(u.reference) > lp.rows()) {
        ++rep.failed;
        spdlog::warn("align: {} has too few frames for its reference", u.id);
        continue;
      }
      try {
        alignments[u.id] = ToTransducerAlignment(CtcViterbiAlign(lp, u.reference));
        ++rep.aligned;
      } catch (const Error &e) {
        ++rep.failed;
        spdlog::warn("align: {}: {}", u.id, e.what());
      }
    }
    fs::create_directories(fs::path(paths.Alignments(split)).parent_path());
    std::ofstream os(paths.Alignments(split));
    if (!os) throw Error("io", "cannot write " + paths.Alignments(split));
    WriteAlignments(os, alignments);
  }
  return rep;
}

namespace {

StageResult RunStage1(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  Require(paths.Alignments("train"), "training alignments");
  Require(paths.Alignments("dev"), "dev alignments");
  Dataset train = LoadSplit(cfg, "train", true);
  Dataset dev = LoadSplit(cfg, "dev", true);
  const auto train_ali = LoadAlignments(paths.Alignments("train"), train.vocab);
  const auto dev_ali = LoadAlignments(paths.Alignments("dev"), dev.vocab);
  const uint64_t seed = static_cast<uint64_t>(cfg.Int("seed"));
  const ModelConfig mc = ModelConfigFrom(cfg, train.vocab, train.feat_dim);
  TransducerModel model(mc, MixSeed(seed, 200));
  const LossWeights w = LossWeightsFrom(cfg);
  const MaskSpec masks = MaskSpecFrom(cfg);
  const double dropout = cfg.Double("stage1.dropout");
  const int32_t chunk = static_cast<int32_t>(cfg.Int("stage1.chunk_frames"));

  // Training items: whole utterances or chunks, each with its alignment.
  struct Item {
    Matrix feats;
    AlignmentPath alignment;
    LabelSeq seed_history;
    std::string id;
  };
  std::vector<Item> items;
  for (const auto &u : train.utts) {
    auto it = train_ali.find(u.id);
    if (it == train_ali.end()) continue;
    if (chunk > 0) {
      for (Chunk &c : ChunkUtterance(u.feats, it->second, chunk, mc.context_k,
                                     mc.subsample))
        items.push_back({std::move(c.feats), std::move(c.alignment),
                         std::move(c.seed_history), u.id});
    } else {
      items.push_back({u.feats, it->second, {}, u.id});
    }
  }
  if (items.empty()) throw Error("missing-artifact", "no aligned training utterances");

  LoopOptions opt;
  opt.dir = paths.StageDir(1);
  opt.epochs = static_cast<int>(cfg.Int("stage1.epochs"));
  opt.schedule.kind = ScheduleKind::kOclrStage1;
  opt.schedule.lr_peak = cfg.Double("stage1.lr_peak");
  opt.schedule.lr_final = cfg.Double("optim.lr_final");
  opt.l2 = cfg.Double("optim.l2");
  opt.seed = MixSeed(seed, 201);
  opt.batch_size = cfg.Int("stage1.batch_frames");
  for (const auto &it : items) opt.sizes.push_back(static_cast<int32_t>(it.feats.rows()));

  BatchFn batch_fn = [&](const std::vector<size_t> &batch, uint64_t bseed) {
    std::vector<Matrix> feats;
    feats.reserve(batch.size());
    std::vector<TrainExample> examples;
    for (size_t i : batch) {
      feats.push_back(MaskAugment(items[i].feats, masks, MixSeed(bseed, i, 1)));
      TrainExample ex;
      ex.id = items[i].id;
      ex.feats = &feats.back();
      ex.alignment = &items[i].alignment;
      ex.seed_history = items[i].seed_history;
      ex.dropout = DropoutSpec{true, MixSeed(bseed, i, 2), dropout};
      examples.push_back(std::move(ex));
    }
    return Stage1Total(&model, examples, w);
  };
  ScoreFn dev_fn;
  if (cfg.Str("select.by") == "wer") {
    dev_fn = [&]() { return DevWer(model, dev, cfg); };
  } else {
    dev_fn = [&]() {
      std::vector<TrainExample> examples;
      for (const auto &u : dev.utts) {
        auto it = dev_ali.find(u.id);
        if (it == dev_ali.end()) continue;
        TrainExample ex;
        ex.id = u.id;
        ex.feats = &u.feats;
        ex.alignment = &it->second;
        examples.push_back(std::move(ex));
      }
      double loss = Stage1Total(&model, examples, w).loss;
      model.Params().ZeroGrad();
      return loss;
    };
  }
  return TrainLoop(&model, opt, batch_fn, dev_fn);
}

StageResult RunStage2(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  const std::string init = paths.Best(paths.StageDir(1));
  Require(init, "stage-1 checkpoint");
  Dataset train = LoadSplit(cfg, "train", true);
  Dataset dev = LoadSplit(cfg, "dev", true);
  TransducerModel model = LoadTransducer(init);
  model.FreezeNormalization(true);
  const uint64_t seed = static_cast<uint64_t>(cfg.Int("seed"));
  const MaskSpec masks = MaskSpecFrom(cfg);
  const double dropout = cfg.Double("stage2.dropout");
  const double clip = cfg.Double("loss.clip_norm");

  LoopOptions opt;
  opt.dir = paths.StageDir(2);
  opt.epochs = static_cast<int>(cfg.Int("stage2.epochs"));
  opt.schedule.kind = ScheduleKind::kOclrStage2;
  opt.schedule.lr_peak = cfg.Double("stage2.lr_peak");
  opt.schedule.lr_final = cfg.Double("optim.lr_final");
  opt.l2 = cfg.Double("optim.l2");
  opt.seed = MixSeed(seed, 301);
  opt.batch_size = cfg.Int("stage2.batch_frames");
  for (const auto &u : train.utts) opt.sizes.push_back(u.NumFrames());

  BatchFn batch_fn = [&](const std::vector<size_t> &batch, uint64_t bseed) {
    std::vector<Matrix> feats;
    feats.reserve(batch.size());
    std::vector<TrainExample> examples;
    for (size_t i : batch) {
      feats.push_back(MaskAugment(train.utts[i].feats, masks, MixSeed(bseed, i, 1)));
      TrainExample ex;
      ex.id = train.utts[i].id;
      ex.feats = &feats.back();
      ex.reference = train.utts[i].reference;
      ex.dropout = DropoutSpec{true, MixSeed(bseed, i, 2), dropout};
      examples.push_back(std::move(ex));
    }
    return Stage2FsLoss(&model, examples, clip);
  };
  ScoreFn dev_fn;
  if (cfg.Str("select.by") == "wer")
    dev_fn = [&]() { return DevWer(model, dev, cfg); };
  else
    dev_fn = [&]() { return DevFsLoss(model, dev); };
  return TrainLoop(&model, opt, batch_fn, dev_fn);
}

NBestStore LoadStore(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error("missing-artifact", "N-best store not found: " + path);
  return ReadNBestStore(is);
}

StageResult RunStage3(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  const std::string init = paths.Best(paths.StageDir(2));
  Require(init, "stage-2 checkpoint");
  Require(paths.NBest("train"), "training N-best store");
  Require(paths.NBest("dev"), "dev N-best store");
  Require(paths.Lm(), "language model");
  Dataset train = LoadSplit(cfg, "train", false);
  Dataset dev = LoadSplit(cfg, "dev", false);
  TransducerModel model = LoadTransducer(init);
  model.FreezeNormalization(true);
  const NBestStore train_store = LoadStore(paths.NBest("train"));
  const NBestStore dev_store = LoadStore(paths.NBest("dev"));
  const int n = static_cast<int>(cfg.Int("stage3.n"));
  const uint64_t seed = static_cast<uint64_t>(cfg.Int("seed"));

  MbrScales scales;
  scales.lm_scale = train_store.lambda1;
  scales.beta = cfg.Double("stage3.beta");
  scales.fs_aux_scale = cfg.Double("stage3.fs_aux_scale");
  scales.Validate();
  const double clip = cfg.Double("loss.clip_norm");

  auto index = [](const Dataset &d) {
    std::map<std::string, const Matrix *> m;
    for (const auto &u : d.utts) m[u.id] = &u.feats;
    return m;
  };
  const auto train_feats = index(train);
  const auto dev_feats = index(dev);
  auto prepare = [&](const NBestStore &store,
                     const std::map<std::string, const Matrix *> &feats,
                     std::vector<NBestList> *lists, std::vector<const Matrix *> *mats) {
    for (const auto &l : store.lists) {
      auto it = feats.find(l.utt_id);
      if (it == feats.end())
        throw Error("missing-artifact", "N-best list for unknown utterance " + l.utt_id);
      lists->push_back(SelectTopN(l, n));
      mats->push_back(it->second);
    }
  };
  std::vector<NBestList> train_lists, dev_lists;
  std::vector<const Matrix *> train_mats, dev_mats;
  prepare(train_store, train_feats, &train_lists, &train_mats);
  prepare(dev_store, dev_feats, &dev_lists, &dev_mats);
  if (train_lists.empty()) throw Error("missing-artifact", "training N-best store is empty");

  LoopOptions opt;
  opt.dir = paths.StageDir(3);
  opt.epochs = static_cast<int>(cfg.Int("stage3.epochs"));
  opt.schedule.kind = ScheduleKind::kConstant;
  opt.schedule.constant_lr = cfg.Double("stage3.lr");
  opt.l2 = cfg.Double("optim.l2");
  opt.seed = MixSeed(seed, 401);
  opt.batch_size = cfg.Int("stage3.batch_lists");
  opt.sizes.assign(train_lists.size(), 1);

  auto mean_loss = [&](std::vector<NBestList> &lists,
                       const std::vector<const Matrix *> &mats, bool risk_only) {
    double total = 0.0;
    int used = 0;
    for (size_t i = 0; i < lists.size(); ++i) {
      Stage3Parts p = Stage3Utterance(&model, *mats[i], &lists[i], scales, 0.0, false);
      if (std::isinf(p.fs)) continue;
      total += risk_only ? p.mbr : p.Total(scales.fs_aux_scale);
      ++used;
    }
    return used > 0 ? total / used : 0.0;
  };
  opt.after_epoch = [&]() { return mean_loss(train_lists, train_mats, true); };

  BatchFn batch_fn = [&](const std::vector<size_t> &batch, uint64_t) {
    std::vector<Stage3Example> examples;
    for (size_t i : batch) examples.push_back({train_mats[i], &train_lists[i]});
    return Stage3Total(&model, examples, scales, clip);
  };
  ScoreFn dev_fn;
  if (cfg.Str("select.by") == "wer")
    dev_fn = [&]() { return DevWer(model, dev, cfg); };
  else
    dev_fn = [&]() { return mean_loss(dev_lists, dev_mats, false); };
  StageResult result = TrainLoop(&model, opt, batch_fn, dev_fn);

  std::ofstream risk(paths.Risk(), std::ios::trunc);
  for (size_t e = 0; e < result.risk.size(); ++e)
    risk << e << '\t' << FormatExact(result.risk[e]) << '\n';
  return result;
}

}  // namespace

StageResult RunStage(const Config &cfg, int stage) {
  switch (stage) {
    case 1: return RunStage1(cfg);
    case 2: return RunStage2(cfg);
    case 3: return RunStage3(cfg);
  }
  throw Error("invalid-arguments", "stage must be 1, 2 or 3");
}

double GenerationLmScale(const Config &cfg, const TransducerModel &model,
                         const NgramLm &gen_lm) {
  if (cfg.Str("stage3.gen_lm_scale") != "auto") {
    double v = cfg.Double("stage3.gen_lm_scale");
    if (!(v > 0.0)) throw Error("invalid-arguments", "stage3.gen_lm_scale must be > 0");
    return v;
  }
  std::vector<double> grid;
  for (double v : cfg.DoubleList("tune.lm_grid"))
    if (v > 0.0) grid.push_back(v);
  if (grid.empty())
    throw Error("invalid-arguments", "tune.lm_grid has no positive scale for generation");
  DecodeConfig dc = DecodeConfigFrom(cfg);
  dc.beam_size = static_cast<int>(cfg.Int("stage3.gen_beam"));
  TuneResult t = TuneScales(model, &gen_lm, LoadSplit(cfg, "dev", false), grid, {0.0}, dc);
  spdlog::info("build-nbest: generation lm_scale {}", t.lm_scale);
  return t.lm_scale;
}

NBestBuildReport BuildNBest(const Config &cfg) {
  WorkPaths paths(cfg.Str("work_dir"));
  const std::string ckpt = paths.Best(paths.StageDir(2));
  Require(ckpt, "stage-2 checkpoint");
  Require(paths.Lm(), "language model");
  Require(paths.GenLm(), "generation language model");
  TransducerModel model = LoadTransducer(ckpt);
  NgramLm lm = LoadLm(paths.Lm());
  NgramLm gen_lm = LoadLm(paths.GenLm());

  NBestBuildOptions opts;
  opts.n = static_cast<int>(cfg.Int("stage3.n"));
  opts.seed = static_cast<uint64_t>(cfg.Int("stage3.seed"));
  opts.max_frames = static_cast<int32_t>(cfg.Int("data.max_frames"));
  opts.max_labels = static_cast<int32_t>(cfg.Int("data.max_labels"));
  opts.decode = DecodeConfigFrom(cfg);
  opts.decode.ilm_scale = 0.0;
  opts.decode.beam_size = static_cast<int>(cfg.Int("stage3.gen_beam"));
  opts.decode.lm_scale = GenerationLmScale(cfg, model, gen_lm);

  NBestBuildReport total;
  for (const std::string split : {"train", "dev"}) {
    Dataset data = LoadSplit(cfg, split, false);
    std::vector<NBestUtterance> utts;
    for (const auto &u : data.utts) utts.push_back({u.id, &u.feats, u.reference});
    opts.subset_fraction = split == "train" ? cfg.Double("stage3.subset") : 1.0;
    NBestBuildReport rep;
    NBestStore store = BuildStaticNBest(model, utts, &gen_lm, lm, opts, &rep);
    if (rep.failed > 0) spdlog::warn("build-nbest {}: {} utterances failed", split, rep.failed);
    fs::create_directories(fs::path(paths.NBest(split)).parent_path());
    std::ofstream os(paths.NBest(split));
    if (!os) throw Error("io", "cannot write " + paths.NBest(split));
    WriteNBestStore(os, store);
    total.candidates += rep.candidates;
    total.selected += rep.selected;
    total.failed += rep.failed;
  }
  return total;
}

void Aggregate(EvalReport *r) {
  r->totals = EditStats{};
  r->ref_tokens = 0;
  for (const auto &u : r->utts) {
    r->totals += u.stats;
    r->ref_tokens += u.ref_tokens;
  }
  const double denom = r->ref_tokens > 0 ? static_cast<double>(r->ref_tokens) : 1.0;
  r->sub = 100.0 * static_cast<double>(r->totals.sub) / denom;
  r->del = 100.0 * static_cast<double>(r->totals.del) / denom;
  r->ins = 100.0 * static_cast<double>(r->totals.ins) / denom;
  r->wer = 100.0 * static_cast<double>(r->totals.sub + r->totals.del + r->totals.ins) /
           denom;
}

EvalReport Evaluate(const TransducerModel &model, const NgramLm *lm,
                    const Dataset &data, const DecodeConfig &dc) {
  EvalReport report;
  report.lm_scale = dc.lm_scale;
  report.ilm_scale = dc.ilm_scale;
  for (const auto &u : data.utts) {
    UttResult r;
    r.id = u.id;
    auto hyps = BeamDecode(model, lm, u.feats, dc);
    if (!hyps.empty()) r.hyp = hyps.front().labels;
    const auto ref_words = dc.w_mapping.Apply(u.reference);
    r.stats = Levenshtein(ref_words, dc.w_mapping.Apply(r.hyp));
    r.ref_tokens = static_cast<int64_t>(ref_words.size());
    report.utts.push_back(std::move(r));
  }
  Aggregate(&report);
  return report;
}

TuneResult TuneScales(const TransducerModel &model, const NgramLm *lm,
                      const Dataset &data, const std::vector<double> &lm_grid,
                      const std::vector<double> &ilm_grid, DecodeConfig dc) {
  if (lm_grid.empty() || ilm_grid.empty())
    throw Error("invalid-arguments", "scale grid is empty");
  TuneResult out;
  bool have = false;
  for (double l1 : lm_grid)
    for (double l2 : ilm_grid) {
      dc.lm_scale = l1;
      dc.ilm_scale = l2;
      EvalReport rep = Evaluate(model, lm, data, dc);
      out.grid.push_back({l1, l2, rep.wer});
      spdlog::info("tune: lm_scale {} ilm_scale {} WER {:.3f}", l1, l2, rep.wer);
      bool better = !have || rep.wer < out.best.wer ||
                    (rep.wer == out.best.wer &&
                     (l1 < out.lm_scale || (l1 == out.lm_scale && l2 < out.ilm_scale)));
      if (better) {
        out.best = std::move(rep);
        out.lm_scale = l1;
        out.ilm_scale = l2;
        have = true;
      }
    }
  return out;
}

}  // namespace monotrans
