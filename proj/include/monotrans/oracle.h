// monotrans/oracle.h

// Reference implementations used to validate the production code: explicit
// path enumeration for the transducer and CTC sums, and central finite
// differences for parameter gradients.

#ifndef MONOTRANS_ORACLE_H_
#define MONOTRANS_ORACLE_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "monotrans/base.h"
#include "monotrans/params.h"
#include "monotrans/topology.h"

namespace monotrans {

/// log sum over every placement of the target's emissions (bitmask over
/// frames), each path scored frame by frame.
double BruteForceTransducer(const LogLattice &lattice, const LabelSeq &target);

/// log sum over every frame-label string in (V+1)^T whose CTC collapse is
/// the target. Throws Error("guard") beyond max_strings.
double BruteForceCtc(const Matrix &log_probs, const LabelSeq &target,
                     uint64_t max_strings = 5000000);

/// |a - n| <= max(rel * max(|a|, |n|), abs_floor)
bool GradientsAgree(double analytic, double numeric, double rel = 1e-4,
                    double abs_floor = 1e-8);

struct GradCheckReport {
  int64_t checked = 0;
  int64_t failures = 0;
  double max_rel_error = 0.0;  // |a - n| / max(|a|, |n|, abs_floor)
  std::string worst;           // "<param>[<index>]"

  bool Passed() const { return failures == 0; }
};

/// `loss_fn` must return the loss and accumulate its gradient into `store`.
/// Analytic gradients are taken from a first call on zeroed gradients; then
/// every scalar is perturbed by +-eps.
GradCheckReport CheckGradients(ParamStore *store, const std::function<double()> &loss_fn,
                               double eps = 1e-5);

struct NamedGradCheck {
  std::string name;
  int64_t num_params = 0;
  GradCheckReport report;
};

/// Finite-difference sweeps of the stage-1 composite, stage-2 full-sum and
/// stage-3 MBR criteria on a small seeded transducer.
std::vector<NamedGradCheck> RunToyGradchecks(uint64_t seed);

/// Random row-normalized lattice / CTC table.
LogLattice RandomLattice(int32_t frames, int32_t target_len, int32_t vocab,
                         uint64_t seed);
Matrix RandomLogProbs(int32_t frames, int32_t vocab, uint64_t seed);

struct OracleSweep {
  int instances = 0;
  double max_abs_error = 0.0;
};

/// Seeded instances with T <= 6, S <= 4, V <= 5 comparing the dynamic
/// programs to enumeration.
OracleSweep SweepTransducerOracle(int instances, uint64_t seed);
OracleSweep SweepCtcOracle(int instances, uint64_t seed);

}  // namespace monotrans

#endif  // MONOTRANS_ORACLE_H_
