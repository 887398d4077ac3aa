// monotrans/lm.cc

#include "monotrans/lm.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace monotrans {

namespace {

// ARPA convention for log10(0).
constexpr double kArpaLogZero = -99.0;

double SafeLog10(double p) {
  return p > 0.0 ? std::log10(p) : kArpaLogZero;
}

double Pow10(double l) { return l <= kArpaLogZero ? 0.0 : std::pow(10.0, l); }

}  // namespace

void NgramLm::IndexWords() {
  ids_.clear();
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) ids_[words_[i]] = i;
}

int NgramLm::Id(const std::string &word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

NgramLm NgramLm::Train(const std::vector<Sentence> &corpus, int order,
                       double discount) {
  if (order < 1) throw Error("invalid-arguments", "n-gram order must be >= 1");
  if (corpus.empty()) throw Error("invalid-arguments", "empty LM corpus");
  if (!(discount >= 0.0 && discount < 1.0))
    throw Error("invalid-arguments", "discount must lie in [0, 1)");

  NgramLm lm;
  lm.order_ = order;
  std::set<std::string> seen;
  for (const auto &sent : corpus)
    for (const auto &w : sent) {
      if (w == "<s>" || w == "</s>" || w == "<unk>")
        throw Error("invalid-arguments", "reserved token in LM corpus: " + w);
      seen.insert(w);
    }
  lm.words_ = {"<s>", "</s>", "<unk>"};
  lm.words_.insert(lm.words_.end(), seen.begin(), seen.end());
  lm.IndexWords();
  const int vocab = lm.VocabSize();

  // counts[n-1][ngram]
  std::vector<std::map<std::vector<int>, double>> counts(order);
  for (const auto &sent : corpus) {
    std::vector<int> ids{kBos};
    for (const auto &w : sent) ids.push_back(lm.Id(w));
    ids.push_back(kEos);
    for (size_t end = 1; end < ids.size(); ++end)
      for (int n = 1; n <= order && static_cast<int>(end) - n + 1 >= 0; ++n) {
        std::vector<int> gram(ids.begin() + (end - n + 1), ids.begin() + end + 1);
        counts[n - 1][gram] += 1.0;
      }
  }

  lm.grams_.assign(order, {});
  // Unigrams: discounted counts, freed mass to <unk>.
  {
    double total = 0.0;
    for (const auto &[g, c] : counts[0]) total += c;
    double freed = 0.0;
    std::vector<double> prob(vocab, 0.0);
    for (const auto &[g, c] : counts[0]) {
      prob[g[0]] = (c - discount) / total;
      freed += discount / total;
    }
    prob[kUnk] += freed;
    for (int w = 0; w < vocab; ++w)
      lm.grams_[0][{w}].log10_prob = w == kBos ? kArpaLogZero : SafeLog10(prob[w]);
  }

  for (int n = 2; n <= order; ++n) {
    // Group n-grams by history.
    std::map<std::vector<int>, std::vector<std::pair<int, double>>> by_hist;
    for (const auto &[g, c] : counts[n - 1]) {
      std::vector<int> hist(g.begin(), g.end() - 1);
      by_hist[hist].push_back({g.back(), c});
    }
    for (const auto &[hist, followers] : by_hist) {
      double total = 0.0;
      for (const auto &f : followers) total += f.second;
      double kept = 0.0, lower_seen = 0.0;
      std::vector<int> lower_ctx(hist.begin() + 1, hist.end());
      for (const auto &[w, c] : followers) {
        double p = (c - discount) / total;
        std::vector<int> gram = hist;
        gram.push_back(w);
        lm.grams_[n - 1][gram].log10_prob = SafeLog10(p);
        kept += p;
        lower_seen += Pow10(lm.Log10Prob(lower_ctx, w));
      }
      double num = 1.0 - kept, den = 1.0 - lower_seen;
      double bow = num <= 0.0 ? 0.0 : num / den;
      lm.grams_[n - 2][hist].log10_backoff = SafeLog10(bow);
    }
  }
  return lm;
}

double NgramLm::Log10Prob(const std::vector<int> &context, int word) const {
  int max_hist = std::min<int>(order_ - 1, static_cast<int>(context.size()));
  // Backoff chain from the longest usable history down to the unigram.
  double backoff = 0.0;
  for (int h = max_hist; h >= 0; --h) {
    std::vector<int> gram(context.end() - h, context.end());
    gram.push_back(word);
    const Table &table = grams_[h];
    auto it = table.find(gram);
    if (it != table.end()) return backoff + it->second.log10_prob;
    if (h == 0) break;
    gram.pop_back();
    auto hit = grams_[h - 1].find(gram);
    if (hit != grams_[h - 1].end()) backoff += hit->second.log10_backoff;
  }
  return kArpaLogZero;
}

double NgramLm::LogProb(const std::vector<int> &context, int word) const {
  double l10 = Log10Prob(context, word);
  if (l10 <= kArpaLogZero) return kLogZero;
  return l10 * std::numbers::ln10;
}

double NgramLm::Score(const Sentence &words) const {
  std::vector<int> ctx{kBos};
  double total = 0.0;
  for (const auto &w : words) {
    int id = Id(w);
    total += LogProb(ctx, id);
    ctx.push_back(id);
  }
  return total + LogProb(ctx, kEos);
}

std::vector<std::vector<int>> NgramLm::Contexts() const {
  std::vector<std::vector<int>> out{{}};
  for (int n = 1; n < order_; ++n)
    for (const auto &[gram, entry] : grams_[n - 1]) {
      if (gram.back() == kEos) continue;
      if (n == 1 && gram[0] == kUnk) continue;
      bool has_followers = false;
      auto it = grams_[n].lower_bound(gram);
      if (it != grams_[n].end() &&
          std::equal(gram.begin(), gram.end(), it->first.begin()))
        has_followers = true;
      if (has_followers) out.push_back(gram);
    }
  return out;
}

void NgramLm::WriteArpa(std::ostream &os) const {
  os << "\\data\\\n";
  for (int n = 1; n <= order_; ++n)
    os << "ngram " << n << "=" << grams_[n - 1].size() << "\n";
  for (int n = 1; n <= order_; ++n) {
    os << "\n\\" << n << "-grams:\n";
    for (const auto &[gram, e] : grams_[n - 1]) {
      os << FormatExact(e.log10_prob) << '\t';
      for (size_t i = 0; i < gram.size(); ++i)
        os << (i ? " " : "") << words_[gram[i]];
      if (n < order_) os << '\t' << FormatExact(e.log10_backoff);
      os << '\n';
    }
  }
  os << "\n\\end\\\n";
}

NgramLm NgramLm::ReadArpa(std::istream &is) {
  std::string line;
  auto next_nonempty = [&]() -> bool {
    while (std::getline(is, line))
      if (!line.empty()) return true;
    return false;
  };
  if (!next_nonempty() || line != "\\data\\")
    throw Error("format", "ARPA file must start with \\data\\");
  std::vector<size_t> counts;
  while (next_nonempty() && line.rfind("ngram ", 0) == 0) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("format", "bad ngram count line");
    counts.push_back(std::stoul(line.substr(eq + 1)));
  }
  if (counts.empty()) throw Error("format", "ARPA header lists no orders");

  NgramLm lm;
  lm.order_ = static_cast<int>(counts.size());
  lm.grams_.assign(lm.order_, {});
  std::vector<std::vector<std::pair<std::vector<std::string>, Entry>>> raw(
      lm.order_);
  for (int n = 1; n <= lm.order_; ++n) {
    if (line != "\\" + std::to_string(n) + "-grams:")
      throw Error("format", "expected section \\" + std::to_string(n) +
                                "-grams:, got '" + line + "'");
    for (size_t i = 0; i < counts[n - 1]; ++i) {
      if (!next_nonempty()) throw Error("format", "truncated ARPA section");
      std::istringstream ls(line);
      std::string tok;
      ls >> tok;
      Entry e;
      e.log10_prob = ParseDouble(tok);
      std::vector<std::string> gram(n);
      for (int j = 0; j < n; ++j)
        if (!(ls >> gram[j])) throw Error("format", "short n-gram line");
      if (ls >> tok) e.log10_backoff = ParseDouble(tok);
      raw[n - 1].push_back({std::move(gram), e});
    }
    next_nonempty();
  }
  if (line != "\\end\\") throw Error("format", "missing \\end\\");

  // Vocabulary: the three reserved ids first, the rest in sorted order.
  std::set<std::string> seen;
  for (const auto &[gram, e] : raw[0]) seen.insert(gram[0]);
  for (const char *w : {"<s>", "</s>", "<unk>"}) {
    if (!seen.count(w))
      throw Error("format", std::string("ARPA unigrams lack ") + w);
    seen.erase(w);
  }
  lm.words_ = {"<s>", "</s>", "<unk>"};
  lm.words_.insert(lm.words_.end(), seen.begin(), seen.end());
  lm.IndexWords();
  for (int n = 1; n <= lm.order_; ++n)
    for (const auto &[gram, e] : raw[n - 1]) {
      std::vector<int> ids;
      for (const auto &w : gram) {
        auto it = lm.ids_.find(w);
        if (it == lm.ids_.end())
          throw Error("format", "n-gram uses word missing from unigrams: " + w);
        ids.push_back(it->second);
      }
      lm.grams_[n - 1][ids] = e;
    }
  return lm;
}

}  // namespace monotrans
