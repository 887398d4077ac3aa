// monotrans/base.h

#ifndef MONOTRANS_BASE_H_
#define MONOTRANS_BASE_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace monotrans {

/// Label ids live in [0, V). The blank symbol is always id V, so a
/// vocabulary of V labels has V + 1 output classes.
using Label = int32_t;
using LabelSeq = std::vector<Label>;

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Error carrying a short machine-readable code next to the message. The CLI
/// prints the code so scripts can branch on it.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string &what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string &code() const { return code_; }

 private:
  std::string code_;
};

inline double LogAdd(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

double LogSumExp(const double *begin, const double *end);
inline double LogSumExp(const std::vector<double> &v) {
  return LogSumExp(v.data(), v.data() + v.size());
}

/// In-place log-softmax over a row of length n.
void LogSoftmaxInPlace(double *row, int n);

std::string JoinLabels(const LabelSeq &labels);

/// Formats a double with 17 significant digits; parses back bit-exactly.
std::string FormatExact(double v);
double ParseDouble(const std::string &s);

}  // namespace monotrans

#endif  // MONOTRANS_BASE_H_
