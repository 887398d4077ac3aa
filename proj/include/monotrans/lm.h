// monotrans/lm.h

// Count-based n-gram LM with absolute discounting and backoff, stored and
// exchanged in the ARPA text format (base-10 log-probabilities).

#ifndef MONOTRANS_LM_H_
#define MONOTRANS_LM_H_

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "monotrans/base.h"

namespace monotrans {

class NgramLm {
 public:
  using Sentence = std::vector<std::string>;

  static constexpr int kBos = 0;  // <s>
  static constexpr int kEos = 1;  // </s>
  static constexpr int kUnk = 2;  // <unk>

  /// Throws Error("invalid-arguments") for order < 1, an empty corpus, or a
  /// discount outside [0, 1).
  static NgramLm Train(const std::vector<Sentence> &corpus, int order,
                       double discount);

  static NgramLm ReadArpa(std::istream &is);
  void WriteArpa(std::ostream &os) const;

  int Order() const { return order_; }
  int VocabSize() const { return static_cast<int>(words_.size()); }
  const std::string &Word(int id) const { return words_[id]; }
  /// Unknown words map to <unk>.
  int Id(const std::string &word) const;

  /// Natural-log P(word | context); `context` lists the preceding ids, most
  /// recent last, and may be longer than order - 1.
  double LogProb(const std::vector<int> &context, int word) const;

  /// Sum of conditional log-probs of `words` followed by </s>, starting
  /// from <s>.
  double Score(const Sentence &words) const;

  /// Histories of every order that occur in the model (each as an id list).
  std::vector<std::vector<int>> Contexts() const;

  bool operator==(const NgramLm &o) const {
    return order_ == o.order_ && words_ == o.words_ && grams_ == o.grams_;
  }

 private:
  struct Entry {
    double log10_prob = 0.0;
    double log10_backoff = 0.0;
    bool operator==(const Entry &) const = default;
  };
  using Table = std::map<std::vector<int>, Entry>;

  double Log10Prob(const std::vector<int> &context, int word) const;
  void IndexWords();

  int order_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::vector<Table> grams_;  // grams_[n-1] holds the n-grams
};

}  // namespace monotrans

#endif  // MONOTRANS_LM_H_
