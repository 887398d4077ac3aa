// monotrans/mbr.cc

#include "monotrans/mbr.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace monotrans {

void NBestList::Validate() const {
  if (entries.empty()) throw Error("invalid-nbest", "empty list for " + utt_id);
  std::set<LabelSeq> seen;
  int refs = 0;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!seen.insert(entries[i].labels).second)
      throw Error("invalid-nbest", "duplicate hypothesis in " + utt_id);
    if (entries[i].is_reference) {
      ++refs;
      if (static_cast<int>(i) != ref_index)
        throw Error("invalid-nbest", "reference index mismatch in " + utt_id);
    }
  }
  if (refs != 1)
    throw Error("invalid-nbest", "list " + utt_id + " must hold exactly one reference");
}

void MbrScales::Validate() const {
  if (!(lm_scale > 0.0) && !(beta > 0.0))
    throw Error("invalid-arguments", "beta requires lm_scale > 0 or an explicit value");
  if (beta < 0.0) throw Error("invalid-arguments", "beta must be positive");
  if (fs_aux_scale < 0.0)
    throw Error("invalid-arguments", "fs_aux_scale must be >= 0");
}

std::vector<double> SeqPosteriors(const std::vector<NBestEntry> &entries,
                                  const MbrScales &scales) {
  const double beta = scales.Beta();
  std::vector<double> s(entries.size());
  for (size_t i = 0; i < entries.size(); ++i)
    s[i] = entries[i].model_logprob == kLogZero
               ? kLogZero
               : beta * (entries[i].model_logprob +
                         scales.lm_scale * entries[i].lm_logprob);
  const double norm = LogSumExp(s);
  std::vector<double> p(s.size(), 0.0);
  if (norm == kLogZero) return p;
  for (size_t i = 0; i < s.size(); ++i) p[i] = std::exp(s[i] - norm);
  return p;
}

MbrResult MbrLoss(const std::vector<NBestEntry> &entries,
                  const MbrScales &scales) {
  if (entries.empty()) throw Error("invalid-arguments", "empty N-best list");
  MbrResult r;
  r.posteriors = SeqPosteriors(entries, scales);
  for (size_t i = 0; i < entries.size(); ++i)
    r.loss += r.posteriors[i] * entries[i].risk;
  const double beta = scales.Beta();
  r.d_model.resize(entries.size());
  for (size_t i = 0; i < entries.size(); ++i)
    r.d_model[i] = beta * r.posteriors[i] * (entries[i].risk - r.loss);
  return r;
}

void ComputeRisks(NBestList *list, const WMapping &mapping) {
  if (list->ref_index < 0 ||
      list->ref_index >= static_cast<int>(list->entries.size()))
    throw Error("invalid-nbest", "list " + list->utt_id + " has no reference");
  const auto ref = mapping.Apply(list->entries[list->ref_index].labels);
  for (auto &e : list->entries)
    e.risk = static_cast<double>(Levenshtein(ref, mapping.Apply(e.labels)).distance);
}

NBestList SelectTopN(const NBestList &list, int n) {
  if (n < 1) throw Error("invalid-arguments", "N must be >= 1");
  NBestList out;
  out.utt_id = list.utt_id;
  const size_t keep = std::min<size_t>(n, list.entries.size());
  out.entries.assign(list.entries.begin(), list.entries.begin() + keep);
  if (list.ref_index >= static_cast<int>(keep)) {
    out.entries.back() = list.entries[list.ref_index];
  }
  out.ref_index = -1;
  for (size_t i = 0; i < out.entries.size(); ++i)
    if (out.entries[i].is_reference) out.ref_index = static_cast<int>(i);
  return out;
}

Stage3Parts Stage3Utterance(TransducerModel *model, const Matrix &feats,
                            NBestList *list, const MbrScales &scales,
                            double grad_scale, bool backward) {
  if (list->ref_index < 0)
    throw Error("invalid-nbest", "list " + list->utt_id + " has no reference");
  EncoderCache enc_cache;
  EncoderOutput enc = model->Encode(feats, DropoutSpec{}, &enc_cache);
  const Eigen::Index frames = enc.h.rows();

  const size_t n = list->entries.size();
  std::vector<JointCache> caches(n);
  std::vector<FullSumResult> sums(n);
  for (size_t i = 0; i < n; ++i) {
    NBestEntry &e = list->entries[i];
    if (static_cast<Eigen::Index>(e.labels.size()) > frames) {
      e.model_logprob = kLogZero;
      continue;
    }
    LogLattice lattice = model->JointLattice(enc, e.labels, &caches[i]);
    sums[i] = FullSum(lattice, e.labels);
    e.model_logprob = sums[i].log_prob;
  }

  Stage3Parts parts;
  const FullSumResult &ref = sums[list->ref_index];
  if (!ref.Feasible()) {
    parts.mbr = parts.fs = std::numeric_limits<double>::infinity();
    return parts;
  }
  MbrResult mbr = MbrLoss(list->entries, scales);
  parts.mbr = mbr.loss;
  parts.fs = -ref.log_prob;
  if (!backward) return parts;

  Matrix d_h = Matrix::Zero(enc.h.rows(), enc.h.cols());
  for (size_t i = 0; i < n; ++i) {
    if (!sums[i].Feasible()) continue;
    double coef = grad_scale * mbr.d_model[i];
    if (static_cast<int>(i) == list->ref_index)
      coef -= grad_scale * scales.fs_aux_scale;
    if (coef == 0.0) continue;
    LogLattice d = std::move(sums[i].occupancy);
    for (double &g : d.Data()) g *= coef;
    model->JointBackward(caches[i], d, &d_h);
  }
  model->EncoderBackward(enc_cache, d_h, Matrix());
  return parts;
}

BatchLoss Stage3Total(TransducerModel *model,
                      const std::vector<Stage3Example> &batch,
                      const MbrScales &scales, double clip_norm) {
  model->Params().ZeroGrad();
  BatchLoss out;
  std::vector<const Stage3Example *> usable;
  for (const auto &ex : batch) {
    const auto &ref = ex.list->entries.at(ex.list->ref_index).labels;
    if (static_cast<int32_t>(ref.size()) <=
        model->Config().SubsampledFrames(static_cast<int32_t>(ex.feats->rows())))
      usable.push_back(&ex);
    else
      ++out.skipped;
  }
  if (usable.empty()) return out;
  const double scale = 1.0 / static_cast<double>(usable.size());
  for (const Stage3Example *ex : usable) {
    Stage3Parts p = Stage3Utterance(model, *ex->feats, ex->list, scales, scale);
    if (std::isinf(p.fs)) {
      ++out.skipped;
      continue;
    }
    out.loss += p.Total(scales.fs_aux_scale);
    ++out.used;
  }
  if (out.used > 0) out.loss /= out.used;
  out.grad_norm = ClipGradNorm(&model->Params(), clip_norm);
  return out;
}

void WriteNBestStore(std::ostream &os, const NBestStore &store) {
  os << "#nbest v1 N=" << store.n << " lambda1=" << FormatExact(store.lambda1)
     << " seed=" << store.seed << '\n';
  for (const auto &list : store.lists) {
    os << "utt " << list.utt_id << ' ' << list.entries.size() << '\n';
    for (const auto &e : list.entries) {
      os << (e.is_reference ? "ref " : "hyp ") << FormatExact(e.lm_logprob)
         << ' ' << e.labels.size();
      for (Label l : e.labels) os << ' ' << l;
      os << '\n';
    }
  }
}

namespace {

std::string HeaderValue(const std::string &tok, const std::string &key) {
  if (tok.rfind(key + "=", 0) != 0)
    throw Error("format", "N-best header lacks " + key);
  return tok.substr(key.size() + 1);
}

}  // namespace

NBestStore ReadNBestStore(std::istream &is) {
  NBestStore store;
  std::string line;
  if (!std::getline(is, line)) throw Error("format", "empty N-best store");
  {
    std::istringstream hs(line);
    std::string magic, ver, n, lam, seed;
    hs >> magic >> ver >> n >> lam >> seed;
    if (magic != "#nbest" || ver != "v1")
      throw Error("format", "unsupported N-best store header: " + line);
    try {
      store.n = std::stoi(HeaderValue(n, "N"));
      store.seed = std::stoull(HeaderValue(seed, "seed"));
    } catch (const std::logic_error &) {
      throw Error("format", "bad N-best header: " + line);
    }
    store.lambda1 = ParseDouble(HeaderValue(lam, "lambda1"));
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    size_t count = 0;
    NBestList list;
    if (!(ls >> tag >> list.utt_id >> count) || tag != "utt")
      throw Error("format", "expected 'utt <id> <count>', got '" + line + "'");
    for (size_t i = 0; i < count; ++i) {
      if (!std::getline(is, line)) throw Error("format", "truncated N-best list");
      std::istringstream es(line);
      std::string kind, lm;
      size_t len = 0;
      if (!(es >> kind >> lm >> len) || (kind != "hyp" && kind != "ref"))
        throw Error("format", "bad N-best entry: '" + line + "'");
      NBestEntry e;
      e.lm_logprob = ParseDouble(lm);
      e.is_reference = kind == "ref";
      e.labels.resize(len);
      for (auto &l : e.labels)
        if (!(es >> l)) throw Error("format", "short label list: '" + line + "'");
      if (e.is_reference) list.ref_index = static_cast<int>(list.entries.size());
      list.entries.push_back(std::move(e));
    }
    list.Validate();
    ComputeRisks(&list);
    store.lists.push_back(std::move(list));
  }
  return store;
}

std::vector<size_t> SelectSubset(size_t count, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error("invalid-arguments", "subset fraction must lie in (0, 1]");
  std::vector<size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  const size_t keep = static_cast<size_t>(std::llround(fraction * count));
  idx.resize(std::min(keep, count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

NBestStore BuildStaticNBest(const TransducerModel &model,
                            const std::vector<NBestUtterance> &utts,
                            const NgramLm *gen_lm, const NgramLm &score_lm,
                            const NBestBuildOptions &opts,
                            NBestBuildReport *report) {
  if (opts.n < 1) throw Error("invalid-arguments", "N must be >= 1");
  NBestBuildReport rep;
  std::vector<size_t> candidates;
  for (size_t i = 0; i < utts.size(); ++i) {
    const auto &u = utts[i];
    const int32_t frames = static_cast<int32_t>(u.feats->rows());
    const int32_t labels = static_cast<int32_t>(u.reference.size());
    if (opts.max_frames > 0 && frames > opts.max_frames) continue;
    if (opts.max_labels > 0 && labels > opts.max_labels) continue;
    if (frames == 0 || labels > model.Config().SubsampledFrames(frames)) continue;
    candidates.push_back(i);
  }
  rep.candidates = static_cast<int>(candidates.size());

  NBestStore store;
  store.n = opts.n;
  store.lambda1 = opts.decode.lm_scale;
  store.seed = opts.seed;
  DecodeConfig dc = opts.decode;
  dc.n_best = 2 * opts.n;
  dc.beam_size = std::max(dc.beam_size, dc.n_best);
  auto lm_score = [&](const LabelSeq &labels) {
    return score_lm.Score(dc.w_mapping.Apply(labels));
  };
  for (size_t pos : SelectSubset(candidates.size(), opts.subset_fraction, opts.seed)) {
    const auto &u = utts[candidates[pos]];
    ++rep.selected;
    try {
      auto hyps = BeamDecode(model, gen_lm, *u.feats, dc);
      NBestList list;
      list.utt_id = u.id;
      std::set<LabelSeq> seen;
      for (const auto &h : hyps) {
        if (!seen.insert(h.labels).second) continue;
        NBestEntry e;
        e.labels = h.labels;
        e.is_reference = h.labels == u.reference;
        e.lm_logprob = lm_score(h.labels);
        if (e.is_reference) list.ref_index = static_cast<int>(list.entries.size());
        list.entries.push_back(std::move(e));
      }
      if (list.ref_index < 0) {
        NBestEntry ref;
        ref.labels = u.reference;
        ref.is_reference = true;
        ref.lm_logprob = lm_score(u.reference);
        list.ref_index = static_cast<int>(list.entries.size());
        list.entries.push_back(std::move(ref));
      }
      ComputeRisks(&list, dc.w_mapping);
      store.lists.push_back(std::move(list));
    } catch (const Error &) {
      ++rep.failed;
    }
  }
  if (report) *report = rep;
  return store;
}

}  // namespace monotrans
