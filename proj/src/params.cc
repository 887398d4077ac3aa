// monotrans/params.cc

#include "monotrans/params.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace monotrans {

int ParamStore::Add(const std::string &name, int rows, int cols) {
  if (Find(name) >= 0)
    throw Error("invalid-arguments", "duplicate parameter " + name);
  params_.push_back(
      Param{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return Size() - 1;
}

int ParamStore::Find(const std::string &name) const {
  for (int i = 0; i < Size(); ++i)
    if (params_[i].name == name) return i;
  return -1;
}

void ParamStore::ZeroGrad() {
  for (auto &p : params_) p.grad.setZero();
}

void ParamStore::ScaleGrad(double factor) {
  for (auto &p : params_) p.grad *= factor;
}

double ParamStore::GradNorm() const {
  double sq = 0.0;
  for (const auto &p : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

int64_t ParamStore::NumScalars() const {
  int64_t n = 0;
  for (const auto &p : params_) n += p.value.size();
  return n;
}

void ParamStore::InitUniform(uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (auto &p : params_) {
    bool is_bias = p.name.size() >= 4 &&
                   p.name.compare(p.name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      p.value.setZero();
      continue;
    }
    double r = scale / std::sqrt(static_cast<double>(p.value.rows()));
    std::uniform_real_distribution<double> dist(-r, r);
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
      p.value.data()[i] = dist(rng);
  }
}

void ParamStore::SetZero() {
  for (auto &p : params_) p.value.setZero();
}

bool ParamStore::AllFinite() const {
  for (const auto &p : params_)
    if (!p.value.allFinite()) return false;
  return true;
}

namespace binio {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

namespace {

template <typename T>
void WriteLe(std::ostream &os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

template <typename T>
T ReadLe(std::istream &is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char *>(buf), sizeof(T)))
    throw Error("format", "unexpected end of binary stream");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void WriteU32(std::ostream &os, uint32_t v) { WriteLe(os, v); }
void WriteU64(std::ostream &os, uint64_t v) { WriteLe(os, v); }
void WriteI64(std::ostream &os, int64_t v) { WriteLe(os, v); }
void WriteF64(std::ostream &os, double v) { WriteLe(os, v); }
void WriteF32(std::ostream &os, float v) { WriteLe(os, v); }
uint32_t ReadU32(std::istream &is) { return ReadLe<uint32_t>(is); }
uint64_t ReadU64(std::istream &is) { return ReadLe<uint64_t>(is); }
int64_t ReadI64(std::istream &is) { return ReadLe<int64_t>(is); }
double ReadF64(std::istream &is) { return ReadLe<double>(is); }
float ReadF32(std::istream &is) { return ReadLe<float>(is); }

}  // namespace binio

void WriteTensors(std::ostream &os, const ParamStore &store) {
  binio::WriteU64(os, static_cast<uint64_t>(store.Size()));
  for (const Param &p : store) {
    binio::WriteU32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::WriteU32(os, 2);
    binio::WriteU64(os, static_cast<uint64_t>(p.value.rows()));
    binio::WriteU64(os, static_cast<uint64_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
      binio::WriteF64(os, p.value.data()[i]);
  }
}

void ReadTensors(std::istream &is, ParamStore *store) {
  uint64_t count = binio::ReadU64(is);
  if (count != static_cast<uint64_t>(store->Size()))
    throw Error("format", "checkpoint holds " + std::to_string(count) +
                              " tensors, model expects " +
                              std::to_string(store->Size()));
  for (uint64_t n = 0; n < count; ++n) {
    uint32_t len = binio::ReadU32(is);
    if (len > 4096) throw Error("format", "implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len))
      throw Error("format", "truncated tensor name");
    int idx = store->Find(name);
    if (idx < 0) throw Error("format", "unknown tensor " + name);
    uint32_t rank = binio::ReadU32(is);
    if (rank != 2) throw Error("format", "tensor " + name + " has rank != 2");
    uint64_t rows = binio::ReadU64(is), cols = binio::ReadU64(is);
    Param &p = (*store)[idx];
    if (rows != static_cast<uint64_t>(p.value.rows()) ||
        cols != static_cast<uint64_t>(p.value.cols()))
      throw Error("format", "shape mismatch for tensor " + name);
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
      p.value.data()[i] = binio::ReadF64(is);
  }
}

}  // namespace monotrans
