// monotrans/ctc.cc

#include "monotrans/ctc.h"

#include <istream>
#include <ostream>
#include <sstream>

namespace monotrans {

int32_t CtcMinFrames(const LabelSeq &target) {
  int32_t n = static_cast<int32_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

LabelSeq CtcCollapse(const std::vector<Label> &frames, Label blank) {
  LabelSeq out;
  Label prev = blank;
  for (Label y : frames) {
    if (y != blank && y != prev) out.push_back(y);
    prev = y;
  }
  return out;
}

namespace {

// Blank-interleaved target: b a1 b a2 ... aS b.
std::vector<Label> Expand(const LabelSeq &target, Label blank) {
  std::vector<Label> ext(2 * target.size() + 1, blank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

// Whether state u may be entered from u - 2 (skipping the blank between).
bool CanSkip(const std::vector<Label> &ext, size_t u, Label blank) {
  return u >= 2 && ext[u] != blank && ext[u] != ext[u - 2];
}

void CheckInput(const Matrix &log_probs, const LabelSeq &target) {
  if (log_probs.cols() < 2)
    throw Error("invalid-arguments", "CTC table needs at least one label");
  Label blank = static_cast<Label>(log_probs.cols() - 1);
  for (Label a : target)
    if (a < 0 || a >= blank)
      throw Error("invalid-arguments", "CTC target label out of range");
}

}  // namespace

CtcResult CtcFullSum(const Matrix &log_probs, const LabelSeq &target) {
  CheckInput(log_probs, target);
  const int32_t T = static_cast<int32_t>(log_probs.rows());
  const Label blank = static_cast<Label>(log_probs.cols() - 1);
  CtcResult result;
  if (T < CtcMinFrames(target)) return result;
  if (T == 0) {
    result.log_prob = 0.0;
    result.grad = Matrix::Zero(0, log_probs.cols());
    return result;
  }

  const std::vector<Label> ext = Expand(target, blank);
  const size_t U = ext.size();
  Matrix alpha = Matrix::Constant(T, U, kLogZero);
  Matrix beta = Matrix::Constant(T, U, kLogZero);

  alpha(0, 0) = log_probs(0, ext[0]);
  if (U > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (int32_t t = 1; t < T; ++t) {
    for (size_t u = 0; u < U; ++u) {
      double a = alpha(t - 1, u);
      if (u >= 1) a = LogAdd(a, alpha(t - 1, u - 1));
      if (CanSkip(ext, u, blank)) a = LogAdd(a, alpha(t - 1, u - 2));
      alpha(t, u) = a == kLogZero ? kLogZero : a + log_probs(t, ext[u]);
    }
  }
  double total = alpha(T - 1, U - 1);
  if (U > 1) total = LogAdd(total, alpha(T - 1, U - 2));
  if (total == kLogZero) return result;

  // beta(t, u): log-probability of frames t+1..T-1 given state u at t.
  beta(T - 1, U - 1) = 0.0;
  if (U > 1) beta(T - 1, U - 2) = 0.0;
  for (int32_t t = T - 2; t >= 0; --t) {
    for (size_t u = 0; u < U; ++u) {
      double b = beta(t + 1, u) + log_probs(t + 1, ext[u]);
      if (u + 1 < U)
        b = LogAdd(b, beta(t + 1, u + 1) + log_probs(t + 1, ext[u + 1]));
      if (u + 2 < U && CanSkip(ext, u + 2, blank))
        b = LogAdd(b, beta(t + 1, u + 2) + log_probs(t + 1, ext[u + 2]));
      beta(t, u) = b;
    }
  }

  result.log_prob = total;
  result.grad = Matrix::Zero(T, log_probs.cols());
  for (int32_t t = 0; t < T; ++t)
    for (size_t u = 0; u < U; ++u) {
      double g = alpha(t, u) + beta(t, u);
      if (g != kLogZero) result.grad(t, ext[u]) += std::exp(g - total);
    }
  return result;
}

FrameAlignment CtcViterbiAlign(const Matrix &log_probs, const LabelSeq &target) {
  CheckInput(log_probs, target);
  const int32_t T = static_cast<int32_t>(log_probs.rows());
  const Label blank = static_cast<Label>(log_probs.cols() - 1);
  if (T < CtcMinFrames(target) || (T == 0 && !target.empty()))
    throw Error("unreachable", "target of length " +
                                   std::to_string(target.size()) +
                                   " cannot be aligned to " +
                                   std::to_string(T) + " frames");
  FrameAlignment fa;
  fa.blank = blank;
  if (T == 0) return fa;

  const std::vector<Label> ext = Expand(target, blank);
  const size_t U = ext.size();
  Matrix score = Matrix::Constant(T, U, kLogZero);
  std::vector<std::vector<int8_t>> back(T, std::vector<int8_t>(U, 0));
  score(0, 0) = log_probs(0, ext[0]);
  if (U > 1) score(0, 1) = log_probs(0, ext[1]);
  for (int32_t t = 1; t < T; ++t) {
    for (size_t u = 0; u < U; ++u) {
      double best = score(t - 1, u);
      int8_t step = 0;
      if (u >= 1 && score(t - 1, u - 1) > best) {
        best = score(t - 1, u - 1);
        step = 1;
      }
      if (CanSkip(ext, u, blank) && score(t - 1, u - 2) > best) {
        best = score(t - 1, u - 2);
        step = 2;
      }
      score(t, u) = best == kLogZero ? kLogZero : best + log_probs(t, ext[u]);
      back[t][u] = step;
    }
  }
  size_t u = U - 1;
  if (U > 1 && score(T - 1, U - 2) > score(T - 1, U - 1)) u = U - 2;
  if (score(T - 1, u) == kLogZero)
    throw Error("unreachable", "no CTC path with non-zero probability");

  fa.frames.assign(T, blank);
  for (int32_t t = T - 1; t >= 0; --t) {
    fa.frames[t] = ext[u];
    u -= back[t][u];
  }
  return fa;
}

AlignmentPath ToTransducerAlignment(const FrameAlignment &fa) {
  AlignmentPath out{std::vector<Label>(fa.frames.size(), fa.blank), fa.blank};
  for (size_t t = 0; t < fa.frames.size(); ++t) {
    Label y = fa.frames[t];
    if (y == fa.blank) continue;
    bool last_of_run = t + 1 == fa.frames.size() || fa.frames[t + 1] != y;
    if (last_of_run) out.frames[t] = y;
  }
  return out;
}

void WriteAlignments(std::ostream &os,
                     const std::map<std::string, AlignmentPath> &alignments) {
  for (const auto &[id, path] : alignments) {
    os << id << ' ' << path.NumFrames();
    for (Label y : path.frames) {
      if (y == path.blank)
        os << " _";
      else
        os << ' ' << y;
    }
    os << '\n';
  }
}

std::map<std::string, AlignmentPath> ReadAlignments(std::istream &is,
                                                    int32_t vocab_size) {
  std::map<std::string, AlignmentPath> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    int32_t T = -1;
    if (!(ls >> id >> T) || T < 0)
      throw Error("format", "alignment line " + std::to_string(lineno) +
                                ": expected '<id> <T> ...'");
    AlignmentPath path{{}, vocab_size};
    std::string tok;
    while (ls >> tok) {
      if (tok == "_") {
        path.frames.push_back(vocab_size);
        continue;
      }
      Label y = static_cast<Label>(std::stol(tok));
      if (y < 0 || y >= vocab_size)
        throw Error("format", "alignment line " + std::to_string(lineno) +
                                  ": label " + tok + " out of range");
      path.frames.push_back(y);
    }
    if (path.NumFrames() != T)
      throw Error("format", "alignment line " + std::to_string(lineno) +
                                ": frame count mismatch");
    out.emplace(id, std::move(path));
  }
  return out;
}

}  // namespace monotrans
