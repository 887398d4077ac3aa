// monotrans/base.cc

#include "monotrans/base.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace monotrans {

double LogSumExp(const double *begin, const double *end) {
  if (begin == end) return kLogZero;
  double mx = *std::max_element(begin, end);
  if (mx == kLogZero) return kLogZero;
  if (std::isinf(mx)) return mx;
  double sum = 0.0;
  for (const double *p = begin; p != end; ++p) sum += std::exp(*p - mx);
  return mx + std::log(sum);
}

void LogSoftmaxInPlace(double *row, int n) {
  double lse = LogSumExp(row, row + n);
  for (int i = 0; i < n; ++i) row[i] -= lse;
}

std::string JoinLabels(const LabelSeq &labels) {
  std::ostringstream os;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (i) os << ' ';
    os << labels[i];
  }
  return os.str();
}

std::string FormatExact(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ParseDouble(const std::string &s) {
  if (s == "-inf") return kLogZero;
  if (s == "inf") return -kLogZero;
  char *end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw Error("parse", "not a number: '" + s + "'");
  return v;
}

}  // namespace monotrans
