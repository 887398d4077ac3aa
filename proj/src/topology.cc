// monotrans/topology.cc

#include "monotrans/topology.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace monotrans {

LogLattice::LogLattice(int32_t num_frames, int32_t target_len,
                       int32_t vocab_size, double fill)
    : num_frames_(num_frames), target_len_(target_len),
      vocab_size_(vocab_size),
      data_(static_cast<size_t>(num_frames) * (target_len + 1) *
                (vocab_size + 1),
            fill) {
  if (num_frames < 0 || target_len < 0 || vocab_size < 1)
    throw Error("invalid-arguments", "bad lattice dimensions");
}

double LogLattice::MaxNormalizationError() const {
  double worst = 0.0;
  for (int32_t t = 0; t < num_frames_; ++t)
    for (int32_t s = 0; s <= target_len_; ++s) {
      const double *row = Row(t, s);
      worst = std::max(worst,
                       std::abs(LogSumExp(row, row + vocab_size_ + 1)));
    }
  return worst;
}

LabelSeq Collapse(const AlignmentPath &path) {
  LabelSeq out;
  for (Label y : path.frames)
    if (y != path.blank) out.push_back(y);
  return out;
}

uint64_t CountPaths(int32_t num_frames, int32_t target_len) {
  if (num_frames < 0 || target_len < 0 || target_len > num_frames)
    throw Error("invalid-arguments",
                "CountPaths requires 0 <= S <= T, got T=" +
                    std::to_string(num_frames) +
                    " S=" + std::to_string(target_len));
  int32_t k = std::min(target_len, num_frames - target_len);
  uint64_t c = 1;
  // c stays integral: c * (n - k + i) / i == C(n - k + i, i).
  for (int32_t i = 1; i <= k; ++i)
    c = c * static_cast<uint64_t>(num_frames - k + i) / static_cast<uint64_t>(i);
  return c;
}

namespace {

void EnumerateRec(int32_t t, int32_t s, const LabelSeq &target,
                  AlignmentPath *cur, std::vector<AlignmentPath> *out) {
  int32_t num_frames = cur->NumFrames();
  int32_t target_len = static_cast<int32_t>(target.size());
  if (t == num_frames) {
    if (s == target_len) out->push_back(*cur);
    return;
  }
  // Emission first so that paths come out in lexicographic order of
  // emission positions.
  if (s < target_len) {
    cur->frames[t] = target[s];
    EnumerateRec(t + 1, s + 1, target, cur, out);
  }
  if (target_len - s < num_frames - t) {
    cur->frames[t] = cur->blank;
    EnumerateRec(t + 1, s, target, cur, out);
  }
}

}  // namespace

std::vector<AlignmentPath> EnumeratePaths(int32_t num_frames,
                                          const LabelSeq &target, Label blank,
                                          uint64_t max_paths) {
  int32_t target_len = static_cast<int32_t>(target.size());
  uint64_t n = CountPaths(num_frames, target_len);
  if (n > max_paths)
    throw Error("guard", "refusing to enumerate " + std::to_string(n) +
                             " paths (limit " + std::to_string(max_paths) +
                             ")");
  std::vector<AlignmentPath> out;
  out.reserve(n);
  AlignmentPath cur{std::vector<Label>(num_frames, blank), blank};
  EnumerateRec(0, 0, target, &cur, &out);
  return out;
}

double PathLogProb(const LogLattice &lattice, const AlignmentPath &path) {
  if (path.NumFrames() != lattice.NumFrames())
    throw Error("invalid-arguments", "path/lattice frame count mismatch");
  double total = 0.0;
  int32_t s = 0;
  for (int32_t t = 0; t < path.NumFrames(); ++t) {
    Label y = path.frames[t];
    if (s > lattice.TargetLen() || (y != path.blank && s == lattice.TargetLen()))
      throw Error("invalid-arguments", "path exceeds lattice target length");
    total += lattice(t, s, y == path.blank ? lattice.Blank() : y);
    if (y != path.blank) ++s;
  }
  return total;
}

namespace {

void CheckShapes(const LogLattice &lattice, const LabelSeq &target) {
  if (lattice.TargetLen() != static_cast<int32_t>(target.size()))
    throw Error("invalid-arguments",
                "lattice target length " + std::to_string(lattice.TargetLen()) +
                    " != target size " + std::to_string(target.size()));
  for (Label a : target)
    if (a < 0 || a >= lattice.VocabSize())
      throw Error("invalid-arguments",
                  "target label " + std::to_string(a) + " out of range");
}

// alpha has (T+1) x (S+1) entries; alpha[t][s] is the log-probability of
// reaching node (t, s).
std::vector<double> Forward(const LogLattice &lat, const LabelSeq &target) {
  const int32_t T = lat.NumFrames(), S = lat.TargetLen();
  const Label blank = lat.Blank();
  std::vector<double> alpha(static_cast<size_t>(T + 1) * (S + 1), kLogZero);
  auto A = [&](int32_t t, int32_t s) -> double & {
    return alpha[static_cast<size_t>(t) * (S + 1) + s];
  };
  A(0, 0) = 0.0;
  for (int32_t t = 1; t <= T; ++t) {
    int32_t s_lo = std::max(0, S - (T - t)), s_hi = std::min(t, S);
    for (int32_t s = s_lo; s <= s_hi; ++s) {
      double stay = s <= t - 1 ? A(t - 1, s) + lat(t - 1, s, blank) : kLogZero;
      double emit =
          s > 0 ? A(t - 1, s - 1) + lat(t - 1, s - 1, target[s - 1]) : kLogZero;
      A(t, s) = LogAdd(stay, emit);
    }
  }
  return alpha;
}

}  // namespace

double FullSumLogProb(const LogLattice &lattice, const LabelSeq &target) {
  CheckShapes(lattice, target);
  const int32_t T = lattice.NumFrames(), S = lattice.TargetLen();
  if (S > T) return kLogZero;
  return Forward(lattice, target)[static_cast<size_t>(T) * (S + 1) + S];
}

FullSumResult FullSum(const LogLattice &lattice, const LabelSeq &target) {
  CheckShapes(lattice, target);
  const int32_t T = lattice.NumFrames(), S = lattice.TargetLen();
  const Label blank = lattice.Blank();
  FullSumResult result;
  if (S > T) return result;

  std::vector<double> alpha = Forward(lattice, target);
  std::vector<double> beta(static_cast<size_t>(T + 1) * (S + 1), kLogZero);
  auto A = [&](int32_t t, int32_t s) {
    return alpha[static_cast<size_t>(t) * (S + 1) + s];
  };
  auto B = [&](int32_t t, int32_t s) -> double & {
    return beta[static_cast<size_t>(t) * (S + 1) + s];
  };
  B(T, S) = 0.0;
  for (int32_t t = T - 1; t >= 0; --t) {
    int32_t s_lo = std::max(0, S - (T - t)), s_hi = std::min(t, S);
    for (int32_t s = s_lo; s <= s_hi; ++s) {
      double stay = lattice(t, s, blank) + B(t + 1, s);
      double emit = s < S ? lattice(t, s, target[s]) + B(t + 1, s + 1)
                          : kLogZero;
      B(t, s) = LogAdd(stay, emit);
    }
  }

  result.log_prob = A(T, S);
  if (result.log_prob == kLogZero) return result;

  result.occupancy = LogLattice(T, S, lattice.VocabSize(), 0.0);
  for (int32_t t = 0; t < T; ++t) {
    int32_t s_lo = std::max(0, S - (T - t)), s_hi = std::min(t, S);
    for (int32_t s = s_lo; s <= s_hi; ++s) {
      double a = A(t, s);
      if (a == kLogZero) continue;
      result.occupancy(t, s, blank) =
          std::exp(a + lattice(t, s, blank) + B(t + 1, s) - result.log_prob);
      if (s < S)
        result.occupancy(t, s, target[s]) = std::exp(
            a + lattice(t, s, target[s]) + B(t + 1, s + 1) - result.log_prob);
    }
  }
  return result;
}

ViterbiResult ViterbiScore(const LogLattice &lattice, const LabelSeq &target) {
  CheckShapes(lattice, target);
  const int32_t T = lattice.NumFrames(), S = lattice.TargetLen();
  const Label blank = lattice.Blank();
  ViterbiResult result;
  result.path.blank = blank;
  if (S > T) return result;

  std::vector<double> score(static_cast<size_t>(T + 1) * (S + 1), kLogZero);
  std::vector<uint8_t> from_emit(score.size(), 0);
  auto Q = [&](int32_t t, int32_t s) -> double & {
    return score[static_cast<size_t>(t) * (S + 1) + s];
  };
  Q(0, 0) = 0.0;
  for (int32_t t = 1; t <= T; ++t) {
    int32_t s_lo = std::max(0, S - (T - t)), s_hi = std::min(t, S);
    for (int32_t s = s_lo; s <= s_hi; ++s) {
      double stay = s <= t - 1 ? Q(t - 1, s) + lattice(t - 1, s, blank)
                               : kLogZero;
      double emit = s > 0 ? Q(t - 1, s - 1) + lattice(t - 1, s - 1, target[s - 1])
                          : kLogZero;
      if (emit > stay) {
        Q(t, s) = emit;
        from_emit[static_cast<size_t>(t) * (S + 1) + s] = 1;
      } else {
        Q(t, s) = stay;
      }
    }
  }
  result.log_prob = Q(T, S);
  if (result.log_prob == kLogZero) return result;

  result.path.frames.assign(T, blank);
  int32_t s = S;
  for (int32_t t = T; t > 0; --t) {
    if (from_emit[static_cast<size_t>(t) * (S + 1) + s]) {
      result.path.frames[t - 1] = target[s - 1];
      --s;
    }
  }
  return result;
}

}  // namespace monotrans
