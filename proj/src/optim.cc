// monotrans/optim.cc

#include "monotrans/optim.h"

#include <cmath>

#include <spdlog/spdlog.h>

namespace monotrans {

ScheduleKind ParseScheduleKind(const std::string &name) {
  if (name == "oclr_stage1") return ScheduleKind::kOclrStage1;
  if (name == "oclr_stage2") return ScheduleKind::kOclrStage2;
  if (name == "constant") return ScheduleKind::kConstant;
  throw Error("invalid-arguments",
              "unknown schedule '" + name +
                  "' (expected oclr_stage1, oclr_stage2 or constant)");
}

std::string ScheduleKindName(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kOclrStage1: return "oclr_stage1";
    case ScheduleKind::kOclrStage2: return "oclr_stage2";
    case ScheduleKind::kConstant: return "constant";
  }
  return "?";
}

void ScheduleSpec::Validate() const {
  if (!(lr_peak > 0.0) || !(lr_final > 0.0) || !(constant_lr > 0.0))
    throw Error("invalid-arguments", "learning rates must be > 0");
  if (total_steps < 1) throw Error("invalid-arguments", "total_steps must be >= 1");
}

namespace {

double Lerp(double a, double b, double f) { return a == b ? a : a * (1.0 - f) + b * f; }

}  // namespace

double LrAt(const ScheduleSpec &spec, int64_t step) {
  if (spec.kind == ScheduleKind::kConstant) return spec.constant_lr;
  if (step < 0 || step > spec.total_steps) {
    spdlog::warn("lr_at: step {} outside [0, {}], clamped", step, spec.total_steps);
    step = step < 0 ? 0 : spec.total_steps;
  }
  const double x =
      static_cast<double>(step) / static_cast<double>(spec.total_steps);
  const double a = ScheduleSpec::kWarmupEnd, b = ScheduleSpec::kDecayEnd;
  const double peak = spec.lr_peak;
  const double start = spec.kind == ScheduleKind::kOclrStage1 ? peak / 10.0 : peak;
  const double low = spec.kind == ScheduleKind::kOclrStage1 ? peak / 10.0 : peak / 5.0;
  if (x <= a) return Lerp(start, peak, x / a);
  if (x <= b) return Lerp(peak, low, (x - a) / (b - a));
  return Lerp(low, spec.lr_final, (x - b) / (1.0 - b));
}

void OptimizerState::Init(const ParamStore &store) {
  step = 0;
  m.clear();
  v.clear();
  for (const Param &p : store) {
    m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void StepUpdate(ParamStore *store, OptimizerState *state, double lr) {
  if (static_cast<int>(state->m.size()) != store->Size())
    throw Error("invalid-arguments", "optimizer state does not match parameters");
  for (const Param &p : *store)
    if (!p.grad.allFinite())
      throw Error("non-finite-gradient",
                  "non-finite gradient in " + p.name + " at step " +
                      std::to_string(state->step + 1));
  const AdamOptions &o = state->options;
  ++state->step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state->step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state->step));
  for (int i = 0; i < store->Size(); ++i) {
    Param &p = (*store)[i];
    Matrix &m = state->m[i];
    Matrix &v = state->v[i];
    m = o.beta1 * m + (1.0 - o.beta1) * p.grad;
    v = o.beta2 * v + (1.0 - o.beta2) * p.grad.cwiseAbs2();
    const double *pm = m.data(), *pv = v.data();
    double *w = p.value.data();
    for (Eigen::Index j = 0; j < p.value.size(); ++j) {
      double update = (pm[j] / c1) / (std::sqrt(pv[j] / c2) + o.eps);
      w[j] -= lr * update + lr * o.l2 * w[j];
    }
  }
}

}  // namespace monotrans
