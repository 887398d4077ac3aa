// monotrans/params.h

#ifndef MONOTRANS_PARAMS_H_
#define MONOTRANS_PARAMS_H_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "monotrans/base.h"

namespace monotrans {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named dense parameters with matching gradient accumulators, kept in
/// registration order so that serialization and optimizer sweeps are
/// deterministic.
class ParamStore {
 public:
  /// Registers a zero-initialized rows x cols parameter; returns its index.
  int Add(const std::string &name, int rows, int cols);

  Param &operator[](int i) { return params_[i]; }
  const Param &operator[](int i) const { return params_[i]; }
  int Size() const { return static_cast<int>(params_.size()); }
  int Find(const std::string &name) const;  // -1 when absent

  void ZeroGrad();
  void ScaleGrad(double factor);
  double GradNorm() const;
  int64_t NumScalars() const;
  /// Uniform(-r, r) init with r = scale / sqrt(rows) for every matrix whose
  /// name does not end in "bias"; biases stay zero.
  void InitUniform(uint64_t seed, double scale = 1.0);
  void SetZero();
  bool AllFinite() const;

  std::vector<Param>::iterator begin() { return params_.begin(); }
  std::vector<Param>::iterator end() { return params_.end(); }
  std::vector<Param>::const_iterator begin() const { return params_.begin(); }
  std::vector<Param>::const_iterator end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
};

namespace binio {
void WriteU32(std::ostream &os, uint32_t v);
void WriteU64(std::ostream &os, uint64_t v);
void WriteI64(std::ostream &os, int64_t v);
void WriteF64(std::ostream &os, double v);
void WriteF32(std::ostream &os, float v);
uint32_t ReadU32(std::istream &is);
uint64_t ReadU64(std::istream &is);
int64_t ReadI64(std::istream &is);
double ReadF64(std::istream &is);
float ReadF32(std::istream &is);
}  // namespace binio

/// Tensor section of a checkpoint: count, then per tensor
/// (name length, name, rank, dims, little-endian f64 values).
void WriteTensors(std::ostream &os, const ParamStore &store);
/// Reads tensors into an already-shaped store; names and shapes must match.
void ReadTensors(std::istream &is, ParamStore *store);

}  // namespace monotrans

#endif  // MONOTRANS_PARAMS_H_
