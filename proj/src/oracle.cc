// monotrans/oracle.cc

#include "monotrans/oracle.h"

#include <bit>
#include <cmath>
#include <random>

#include "monotrans/ctc.h"
#include "monotrans/losses.h"
#include "monotrans/mbr.h"
#include "monotrans/model.h"

namespace monotrans {

double BruteForceTransducer(const LogLattice &lattice, const LabelSeq &target) {
  const int32_t T = lattice.NumFrames();
  const int32_t S = static_cast<int32_t>(target.size());
  if (T > 30) throw Error("guard", "brute force limited to 30 frames");
  std::vector<double> terms;
  for (uint64_t mask = 0; mask < (uint64_t{1} << T); ++mask) {
    if (std::popcount(mask) != S) continue;
    double score = 0.0;
    int32_t s = 0;
    for (int32_t t = 0; t < T; ++t) {
      if (mask >> t & 1) {
        score += lattice(t, s, target[s]);
        ++s;
      } else {
        score += lattice(t, s, lattice.Blank());
      }
    }
    terms.push_back(score);
  }
  return LogSumExp(terms);
}

double BruteForceCtc(const Matrix &log_probs, const LabelSeq &target,
                     uint64_t max_strings) {
  const int32_t T = static_cast<int32_t>(log_probs.rows());
  const int32_t V1 = static_cast<int32_t>(log_probs.cols());
  const Label blank = V1 - 1;
  double count = std::pow(static_cast<double>(V1), T);
  if (count > static_cast<double>(max_strings))
    throw Error("guard", "too many CTC strings to enumerate");
  std::vector<Label> frames(T, 0);
  std::vector<double> terms;
  while (true) {
    if (CtcCollapse(frames, blank) == target) {
      double score = 0.0;
      for (int32_t t = 0; t < T; ++t) score += log_probs(t, frames[t]);
      terms.push_back(score);
    }
    int32_t t = 0;
    while (t < T && ++frames[t] == V1) frames[t++] = 0;
    if (t == T) break;
  }
  return LogSumExp(terms);
}

bool GradientsAgree(double analytic, double numeric, double rel, double abs_floor) {
  return std::abs(analytic - numeric) <=
         std::max(rel * std::max(std::abs(analytic), std::abs(numeric)), abs_floor);
}

GradCheckReport CheckGradients(ParamStore *store, const std::function<double()> &loss_fn,
                               double eps) {
  store->ZeroGrad();
  loss_fn();
  std::vector<Matrix> analytic;
  for (const Param &p : *store) analytic.push_back(p.grad);

  GradCheckReport rep;
  for (int i = 0; i < store->Size(); ++i) {
    for (Eigen::Index j = 0; j < (*store)[i].value.size(); ++j) {
      double &w = (*store)[i].value.data()[j];
      const double orig = w;
      w = orig + eps;
      double up = loss_fn();
      w = orig - eps;
      double down = loss_fn();
      w = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i].data()[j];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++rep.checked;
      if (!GradientsAgree(a, numeric)) ++rep.failures;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = (*store)[i].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  store->ZeroGrad();
  return rep;
}

namespace {

double Uniform(std::mt19937_64 &rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1p-53;
}

ModelConfig ToyConfig() {
  ModelConfig c;
  c.vocab_size = 3;
  c.context_k = 2;
  c.feat_dim = 4;
  c.enc_layers = 2;
  c.enc_dim = 6;
  c.enc_context = 1;
  c.pred_dim = 4;
  c.joint_dim = 6;
  c.subsample = 2;
  c.dropout = 0.1;
  c.aux_middle_layer = 0;
  c.aux_heads = true;
  return c;
}

}  // namespace

std::vector<NamedGradCheck> RunToyGradchecks(uint64_t seed) {
  const ModelConfig cfg = ToyConfig();
  std::mt19937_64 rng(seed);
  Matrix feats(10, cfg.feat_dim);
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = Uniform(rng, -1, 1);
  const Label blank = cfg.vocab_size;
  const LabelSeq reference{0, 1, 2};
  AlignmentPath ali{{0, blank, 1, blank, 2}, blank};
  const DropoutSpec dropout{true, seed + 17, -1.0};

  std::vector<NamedGradCheck> out;
  {
    TransducerModel model(cfg, seed);
    TrainExample ex;
    ex.id = "toy";
    ex.feats = &feats;
    ex.reference = reference;
    ex.alignment = &ali;
    ex.dropout = dropout;
    LossWeights w;
    auto fn = [&]() { return Stage1Utterance(&model, ex, w, 1.0).Total(); };
    out.push_back({"stage1-composite", model.Params().NumScalars(),
                   CheckGradients(&model.Params(), fn)});
  }
  {
    TransducerModel model(cfg, seed + 1);
    TrainExample ex;
    ex.id = "toy";
    ex.feats = &feats;
    ex.reference = reference;
    ex.dropout = dropout;
    auto fn = [&]() { return FsUtterance(&model, ex, 1.0); };
    out.push_back({"stage2-fullsum", model.Params().NumScalars(),
                   CheckGradients(&model.Params(), fn)});
  }
  {
    TransducerModel model(cfg, seed + 2);
    NBestList list;
    list.utt_id = "toy";
    list.entries = {{{0, 2}, kLogZero, -2.1, 0, false},
                    {{0, 1, 2}, kLogZero, -3.4, 0, true},
                    {{1, 1, 2, 0}, kLogZero, -1.7, 0, false}};
    list.ref_index = 1;
    ComputeRisks(&list);
    MbrScales scales;
    scales.lm_scale = 0.5;
    scales.fs_aux_scale = 0.1;
    auto fn = [&]() {
      return Stage3Utterance(&model, feats, &list, scales, 1.0).Total(scales.fs_aux_scale);
    };
    out.push_back({"stage3-mbr", model.Params().NumScalars(),
                   CheckGradients(&model.Params(), fn)});
  }
  return out;
}

LogLattice RandomLattice(int32_t frames, int32_t target_len, int32_t vocab,
                         uint64_t seed) {
  std::mt19937_64 rng(seed);
  LogLattice lat(frames, target_len, vocab);
  for (int32_t t = 0; t < frames; ++t)
    for (int32_t s = 0; s <= target_len; ++s) {
      double *row = lat.Row(t, s);
      for (int32_t v = 0; v <= vocab; ++v) row[v] = Uniform(rng, -3, 3);
      LogSoftmaxInPlace(row, vocab + 1);
    }
  return lat;
}

Matrix RandomLogProbs(int32_t frames, int32_t vocab, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(frames, vocab + 1);
  for (int32_t t = 0; t < frames; ++t) {
    for (int32_t v = 0; v <= vocab; ++v) m(t, v) = Uniform(rng, -3, 3);
    LogSoftmaxInPlace(m.row(t).data(), vocab + 1);
  }
  return m;
}

namespace {

struct Instance {
  int32_t T, V;
  LabelSeq target;
};

Instance DrawInstance(std::mt19937_64 &rng) {
  Instance in;
  in.T = 1 + static_cast<int32_t>(rng() % 6);
  in.V = 1 + static_cast<int32_t>(rng() % 5);
  int32_t S = static_cast<int32_t>(rng() % 5);
  for (int32_t s = 0; s < S; ++s) in.target.push_back(static_cast<Label>(rng() % in.V));
  return in;
}

double AbsError(double a, double b) {
  if (a == kLogZero && b == kLogZero) return 0.0;
  return std::abs(a - b);
}

}  // namespace

OracleSweep SweepTransducerOracle(int instances, uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleSweep sw;
  for (int i = 0; i < instances; ++i) {
    Instance in = DrawInstance(rng);
    if (static_cast<int32_t>(in.target.size()) > in.T) in.target.resize(in.T);
    LogLattice lat = RandomLattice(in.T, static_cast<int32_t>(in.target.size()), in.V, rng());
    double err = AbsError(FullSum(lat, in.target).log_prob,
                          BruteForceTransducer(lat, in.target));
    sw.max_abs_error = std::max(sw.max_abs_error, err);
    ++sw.instances;
  }
  return sw;
}

OracleSweep SweepCtcOracle(int instances, uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleSweep sw;
  for (int i = 0; i < instances; ++i) {
    Instance in = DrawInstance(rng);
    Matrix lp = RandomLogProbs(in.T, in.V, rng());
    double err = AbsError(CtcFullSum(lp, in.target).log_prob, BruteForceCtc(lp, in.target));
    sw.max_abs_error = std::max(sw.max_abs_error, err);
    ++sw.instances;
  }
  return sw;
}

}  // namespace monotrans
