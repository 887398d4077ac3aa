// monotrans/optim.h

// One-cycle learning-rate policy (stage-specific variants) and a
// bias-corrected first/second-moment optimizer with decoupled L2 decay.

#ifndef MONOTRANS_OPTIM_H_
#define MONOTRANS_OPTIM_H_

#include <cstdint>
#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/params.h"

namespace monotrans {

enum class ScheduleKind { kOclrStage1, kOclrStage2, kConstant };

ScheduleKind ParseScheduleKind(const std::string &name);
std::string ScheduleKindName(ScheduleKind kind);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kOclrStage1;
  double lr_peak = 8e-4;
  double lr_final = 1e-6;
  double constant_lr = 1e-5;
  int64_t total_steps = 1;

  // Phase boundaries as fractions of total_steps.
  static constexpr double kWarmupEnd = 0.45;
  static constexpr double kDecayEnd = 0.90;

  void Validate() const;
};

/// Piecewise-linear rate at `step`. Steps outside [0, total_steps] are
/// clamped and a warning is logged.
double LrAt(const ScheduleSpec &spec, int64_t step);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 5e-6;  // decoupled decay coefficient
};

struct OptimizerState {
  AdamOptions options;
  int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  /// Zero moments shaped like `store`.
  void Init(const ParamStore &store);
};

/// One update with the gradients held in `store`:
///   value -= lr * m_hat / (sqrt(v_hat) + eps) + lr * l2 * value
/// Throws Error("non-finite-gradient") naming the offending parameter; nothing
/// is modified in that case.
void StepUpdate(ParamStore *store, OptimizerState *state, double lr);

}  // namespace monotrans

#endif  // MONOTRANS_OPTIM_H_
