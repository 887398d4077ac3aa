// Small fixtures shared by the unit tests.
#ifndef MONOTRANS_TESTS_HELPERS_H_
#define MONOTRANS_TESTS_HELPERS_H_

#include <filesystem>
#include <random>
#include <string>

#include "monotrans/base.h"
#include "monotrans/model.h"

namespace testing {

inline monotrans::ModelConfig TinyConfig() {
  monotrans::ModelConfig c;
  c.vocab_size = 3;
  c.context_k = 2;
  c.feat_dim = 4;
  c.enc_layers = 2;
  c.enc_dim = 6;
  c.enc_context = 1;
  c.pred_dim = 4;
  c.joint_dim = 6;
  c.subsample = 1;
  c.dropout = 0.2;
  return c;
}

inline monotrans::Matrix RandomFeats(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  monotrans::Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string &tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("monotrans-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  std::string Str() const { return path_.string(); }
  std::filesystem::path Path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

#endif  // MONOTRANS_TESTS_HELPERS_H_
