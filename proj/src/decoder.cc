// monotrans/decoder.cc

#include "monotrans/decoder.h"

#include <algorithm>
#include <istream>
#include <sstream>

namespace monotrans {

WMapping WMapping::FromLexicon(const std::map<LabelSeq, std::string> &entries) {
  WMapping m;
  for (const auto &[labels, word] : entries) {
    if (labels.empty()) throw Error("invalid-arguments", "empty lexicon entry");
    m.lexicon_[labels] = word;
    for (size_t n = 1; n < labels.size(); ++n)
      m.prefixes_[LabelSeq(labels.begin(), labels.begin() + n)] = true;
  }
  return m;
}

WMapping WMapping::ReadLexicon(std::istream &is) {
  std::map<LabelSeq, std::string> entries;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    LabelSeq labels;
    Label l;
    while (ls >> l) labels.push_back(l);
    entries[labels] = word;
  }
  return FromLexicon(entries);
}

WMapping::Step WMapping::Extend(LabelSeq *pending, Label label,
                                std::string *word) const {
  pending->push_back(label);
  auto it = lexicon_.find(*pending);
  if (it != lexicon_.end()) {
    *word = it->second;
    pending->clear();
    return Step::kWord;
  }
  return prefixes_.count(*pending) ? Step::kPartial : Step::kInvalid;
}

std::vector<std::string> WMapping::Apply(const LabelSeq &labels) const {
  std::vector<std::string> words;
  if (IsIdentity()) {
    for (Label l : labels) words.push_back(std::to_string(l));
    return words;
  }
  LabelSeq pending;
  std::string word;
  for (Label l : labels) {
    switch (Extend(&pending, l, &word)) {
      case Step::kWord:
        words.push_back(word);
        break;
      case Step::kPartial:
        break;
      case Step::kInvalid:
        throw Error("unmapped-label",
                    "label sequence not covered by the lexicon at label " +
                        std::to_string(l));
    }
  }
  if (!pending.empty())
    throw Error("unmapped-label", "trailing labels do not complete a word");
  return words;
}

std::vector<std::string> ApplyWMapping(const LabelSeq &labels,
                                       const WMapping &mapping) {
  return mapping.Apply(labels);
}

void DecodeConfig::Validate() const {
  if (beam_size < 1) throw Error("invalid-arguments", "beam_size must be >= 1");
  if (n_best < 1) throw Error("invalid-arguments", "n_best must be >= 1");
}

namespace {

bool Better(const Hypothesis &a, const Hypothesis &b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  return a.labels < b.labels;
}

struct BeamEntry {
  Hypothesis hyp;
  std::vector<int> lm_context{NgramLm::kBos};
  LabelSeq pending;  // labels of an incomplete lexicon word
};

class Scorer {
 public:
  Scorer(const TransducerModel &model, const Matrix &enc_proj)
      : model_(model), enc_proj_(enc_proj),
        row_(model.Config().NumOutputs()) {}

  const std::vector<double> &Output(int32_t t, const LabelSeq &labels) {
    const Vector &proj = HistoryProjection(labels);
    model_.OutputLogProbs(enc_proj_.row(t).data(), proj, row_.data());
    return row_;
  }

  const std::vector<double> &Ilm(const LabelSeq &labels) {
    auto ids = model_.HistoryIds(labels);
    auto it = ilm_.find(ids);
    if (it == ilm_.end())
      it = ilm_.emplace(ids, model_.IlmLabelLogProbs(labels)).first;
    return it->second;
  }

 private:
  const Vector &HistoryProjection(const LabelSeq &labels) {
    auto ids = model_.HistoryIds(labels);
    auto it = proj_.find(ids);
    if (it == proj_.end()) it = proj_.emplace(ids, model_.ProjectHistory(ids)).first;
    return it->second;
  }

  const TransducerModel &model_;
  const Matrix &enc_proj_;
  std::vector<double> row_;
  std::map<std::vector<Label>, Vector> proj_;
  std::map<std::vector<Label>, std::vector<double>> ilm_;
};

double Combine(const Hypothesis &h, const DecodeConfig &cfg) {
  return h.transducer + cfg.lm_scale * h.lm - cfg.ilm_scale * h.ilm;
}

void CheckLm(const NgramLm *lm, const DecodeConfig &cfg) {
  if (cfg.lm_scale != 0.0 && lm == nullptr)
    throw Error("invalid-arguments", "lm_scale != 0 requires a language model");
}

}  // namespace

std::vector<Hypothesis> BeamDecode(const TransducerModel &model,
                                   const NgramLm *lm, const Matrix &feats,
                                   const DecodeConfig &cfg) {
  cfg.Validate();
  CheckLm(lm, cfg);
  const bool use_lm = cfg.lm_scale != 0.0;
  const bool use_ilm = cfg.ilm_scale != 0.0;
  const Label blank = model.Config().vocab_size;

  if (feats.rows() == 0) {
    Hypothesis empty;
    if (use_lm) empty.lm = lm->Score({});
    empty.combined = Combine(empty, cfg);
    return {empty};
  }

  EncoderOutput enc = model.Encode(feats, DropoutSpec{});
  Matrix enc_proj = model.ProjectEncoder(enc);
  Scorer scorer(model, enc_proj);

  std::vector<BeamEntry> beam(1);
  for (int32_t t = 0; t < enc_proj.rows(); ++t) {
    std::map<LabelSeq, BeamEntry> next;
    auto merge = [&](BeamEntry &&e) {
      auto [it, inserted] = next.try_emplace(e.hyp.labels, std::move(e));
      if (!inserted)
        it->second.hyp.transducer =
            LogAdd(it->second.hyp.transducer, e.hyp.transducer);
    };
    for (const BeamEntry &cur : beam) {
      const std::vector<double> row = scorer.Output(t, cur.hyp.labels);
      BeamEntry stay = cur;
      stay.hyp.transducer += row[blank];
      merge(std::move(stay));
      const std::vector<double> *ilm_row =
          use_ilm ? &scorer.Ilm(cur.hyp.labels) : nullptr;
      for (Label v = 0; v < blank; ++v) {
        BeamEntry ext = cur;
        ext.hyp.labels.push_back(v);
        ext.hyp.transducer += row[v];
        std::string word;
        bool emits_word = true;
        if (!cfg.w_mapping.IsIdentity()) {
          auto step = cfg.w_mapping.Extend(&ext.pending, v, &word);
          if (step == WMapping::Step::kInvalid) continue;
          emits_word = step == WMapping::Step::kWord;
        } else {
          word = std::to_string(v);
        }
        if (use_lm && emits_word) {
          int id = lm->Id(word);
          ext.hyp.lm += lm->LogProb(ext.lm_context, id);
          ext.lm_context.push_back(id);
        }
        if (use_ilm) ext.hyp.ilm += (*ilm_row)[v];
        merge(std::move(ext));
      }
    }
    beam.clear();
    for (auto &[labels, e] : next) {
      e.hyp.combined = Combine(e.hyp, cfg);
      beam.push_back(std::move(e));
    }
    std::sort(beam.begin(), beam.end(),
              [](const BeamEntry &a, const BeamEntry &b) {
                return Better(a.hyp, b.hyp);
              });
    if (static_cast<int>(beam.size()) > cfg.beam_size) beam.resize(cfg.beam_size);
  }

  std::vector<Hypothesis> out;
  for (BeamEntry &e : beam) {
    if (!e.pending.empty()) continue;
    if (use_lm) e.hyp.lm += lm->LogProb(e.lm_context, NgramLm::kEos);
    e.hyp.combined = Combine(e.hyp, cfg);
    out.push_back(std::move(e.hyp));
  }
  std::sort(out.begin(), out.end(), Better);
  if (static_cast<int>(out.size()) > cfg.n_best) out.resize(cfg.n_best);
  return out;
}

Hypothesis ExhaustiveDecode(const TransducerModel &model, const NgramLm *lm,
                            const Matrix &feats, const DecodeConfig &cfg,
                            uint64_t max_paths) {
  CheckLm(lm, cfg);
  const int32_t V1 = model.Config().NumOutputs();
  const Label blank = model.Config().vocab_size;
  const int32_t T =
      feats.rows() == 0
          ? 0
          : model.Config().SubsampledFrames(static_cast<int32_t>(feats.rows()));
  double total = 1.0;
  for (int32_t t = 0; t < T; ++t) total *= V1;
  if (total > static_cast<double>(max_paths))
    throw Error("guard", "exhaustive search over " + FormatExact(total) +
                             " alignments refused");

  std::map<LabelSeq, double> posterior;
  if (T == 0) {
    posterior[{}] = 0.0;
  } else {
    EncoderOutput enc = model.Encode(feats, DropoutSpec{});
    Matrix enc_proj = model.ProjectEncoder(enc);
    std::vector<double> row(V1);
    LabelSeq labels;
    auto dfs = [&](auto &&self, int32_t t, double score) -> void {
      if (t == T) {
        auto [it, inserted] = posterior.try_emplace(labels, score);
        if (!inserted) it->second = LogAdd(it->second, score);
        return;
      }
      model.OutputLogProbs(enc_proj.row(t).data(),
                           model.ProjectHistory(model.HistoryIds(labels)),
                           row.data());
      std::vector<double> local = row;
      self(self, t + 1, score + local[blank]);
      for (Label v = 0; v < blank; ++v) {
        labels.push_back(v);
        self(self, t + 1, score + local[v]);
        labels.pop_back();
      }
    };
    dfs(dfs, 0, 0.0);
  }

  Hypothesis best;
  bool found = false;
  for (const auto &[labels, log_post] : posterior) {
    Hypothesis h;
    h.labels = labels;
    h.transducer = log_post;
    if (cfg.lm_scale != 0.0) {
      std::vector<std::string> words;
      try {
        words = cfg.w_mapping.Apply(labels);
      } catch (const Error &) {
        continue;
      }
      h.lm = lm->Score(words);
    } else if (!cfg.w_mapping.IsIdentity()) {
      try {
        cfg.w_mapping.Apply(labels);
      } catch (const Error &) {
        continue;
      }
    }
    if (cfg.ilm_scale != 0.0) {
      LabelSeq prefix;
      for (Label a : labels) {
        h.ilm += model.IlmLabelLogProbs(prefix)[a];
        prefix.push_back(a);
      }
    }
    h.combined = Combine(h, cfg);
    if (!found || Better(h, best)) {
      best = h;
      found = true;
    }
  }
  if (!found) throw Error("no-hypothesis", "no label sequence maps to words");
  return best;
}

std::string FormatDecodeLine(const std::string &utt_id, int rank,
                             const Hypothesis &hyp) {
  std::ostringstream os;
  os << "utt " << utt_id << ' ' << rank << ' ' << FormatExact(hyp.combined)
     << ' ' << FormatExact(hyp.transducer) << ' ' << FormatExact(hyp.lm) << ' '
     << FormatExact(hyp.ilm) << " |";
  for (Label l : hyp.labels) os << ' ' << l;
  return os.str();
}

}  // namespace monotrans
