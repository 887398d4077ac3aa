// monotrans/dataio.cc

#include "monotrans/dataio.h"

#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "monotrans/params.h"

namespace monotrans {

namespace fs = std::filesystem;

namespace {

// Portable draws: the standard distributions are implementation-defined.
double Uniform01(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

double Gaussian(std::mt19937_64 &rng) {
  double u1 = 1.0 - Uniform01(rng);
  double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int32_t UniformInt(std::mt19937_64 &rng, int32_t lo, int32_t hi) {
  return lo + static_cast<int32_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

Label Categorical(std::mt19937_64 &rng, const double *probs, int32_t n) {
  double u = Uniform01(rng), acc = 0.0;
  for (int32_t i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  for (int32_t i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

std::string UttId(const std::string &split, int32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05d", split.c_str(), i);
  return buf;
}

std::ifstream OpenIn(const fs::path &p, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(p, mode);
  if (!is) throw Error("missing-file", "cannot open " + p.string());
  return is;
}

std::ofstream OpenOut(const fs::path &p, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(p, mode);
  if (!os) throw Error("io", "cannot write " + p.string());
  return os;
}

}  // namespace

void SyntheticSpec::Validate() const {
  if (vocab < 2) throw Error("invalid-arguments", "vocab must be >= 2");
  if (num_train < 0 || num_dev < 0 || num_test < 0)
    throw Error("invalid-arguments", "utterance counts must be >= 0");
  if (min_len < 0 || max_len < min_len)
    throw Error("invalid-arguments", "invalid length range");
  if (min_frames_per_label < 1 || max_frames_per_label < min_frames_per_label)
    throw Error("invalid-arguments", "invalid frames-per-label range");
  if (feat_dim < 1) throw Error("invalid-arguments", "feat_dim must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error("invalid-arguments", "noise_sigma must be >= 0");
  if (!(grammar_sharpness >= 0.0))
    throw Error("invalid-arguments", "grammar_sharpness must be >= 0");
}

bool Dataset::operator==(const Dataset &o) const {
  if (feat_dim != o.feat_dim || vocab != o.vocab || utts.size() != o.utts.size())
    return false;
  for (size_t i = 0; i < utts.size(); ++i) {
    const auto &a = utts[i], &b = o.utts[i];
    if (a.id != b.id || a.reference != b.reference ||
        a.feats.rows() != b.feats.rows() || a.feats.cols() != b.feats.cols() ||
        a.feats != b.feats)
      return false;
  }
  return true;
}

uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SyntheticSource MakeSource(const SyntheticSpec &spec) {
  spec.Validate();
  std::mt19937_64 rng(SplitMix64(spec.seed));
  SyntheticSource src;
  src.prototypes.resize(spec.vocab, spec.feat_dim);
  for (Eigen::Index i = 0; i < src.prototypes.size(); ++i)
    src.prototypes.data()[i] = Gaussian(rng);
  src.transitions = Matrix::Zero(spec.vocab + 1, spec.vocab);
  for (int32_t prev = 0; prev <= spec.vocab; ++prev) {
    double total = 0.0;
    for (int32_t next = 0; next < spec.vocab; ++next) {
      double w = std::exp(spec.grammar_sharpness * Gaussian(rng));
      if (next == prev) w = 0.0;  // no immediate repeats
      src.transitions(prev, next) = w;
      total += w;
    }
    src.transitions.row(prev) /= total;
  }
  return src;
}

Corpus Generate(const SyntheticSpec &spec) {
  SyntheticSource src = MakeSource(spec);
  Corpus corpus;
  int64_t global = 0;
  auto fill = [&](Dataset *data, const std::string &split, int32_t count) {
    data->feat_dim = spec.feat_dim;
    data->vocab = spec.vocab;
    for (int32_t i = 0; i < count; ++i, ++global) {
      std::mt19937_64 rng(SplitMix64(spec.seed ^ SplitMix64(static_cast<uint64_t>(global) + 1)));
      Utterance u;
      u.id = UttId(split, i);
      int32_t len = UniformInt(rng, spec.min_len, spec.max_len);
      Label prev = spec.vocab;
      std::vector<int32_t> durations;
      for (int32_t s = 0; s < len; ++s) {
        prev = Categorical(rng, src.transitions.row(prev).data(), spec.vocab);
        u.reference.push_back(prev);
        durations.push_back(
            UniformInt(rng, spec.min_frames_per_label, spec.max_frames_per_label));
      }
      int32_t frames = 0;
      for (int32_t d : durations) frames += d;
      u.feats.resize(frames, spec.feat_dim);
      int32_t t = 0;
      for (size_t s = 0; s < u.reference.size(); ++s)
        for (int32_t k = 0; k < durations[s]; ++k, ++t)
          for (int32_t j = 0; j < spec.feat_dim; ++j) {
            double v = src.prototypes(u.reference[s], j);
            if (spec.noise_sigma > 0.0) v += spec.noise_sigma * Gaussian(rng);
            u.feats(t, j) = static_cast<double>(static_cast<float>(v));
          }
      data->utts.push_back(std::move(u));
    }
  };
  fill(&corpus.train, "train", spec.num_train);
  fill(&corpus.dev, "dev", spec.num_dev);
  fill(&corpus.test, "test", spec.num_test);
  return corpus;
}

Matrix MaskAugment(const Matrix &feats, const MaskSpec &spec, uint64_t seed) {
  const int32_t T = static_cast<int32_t>(feats.rows());
  const int32_t F = static_cast<int32_t>(feats.cols());
  if (spec.time_masks < 0 || spec.feat_masks < 0 || spec.time_width < 0 ||
      spec.feat_width < 0)
    throw Error("invalid-arguments", "mask counts and widths must be >= 0");
  if ((spec.time_masks > 0 && spec.time_width > T) ||
      (spec.feat_masks > 0 && spec.feat_width > F))
    throw Error("invalid-arguments", "mask width exceeds the feature dimension");
  Matrix out = feats;
  std::mt19937_64 rng(SplitMix64(seed));
  for (int32_t m = 0; m < spec.time_masks; ++m) {
    int32_t start = UniformInt(rng, 0, T - spec.time_width);
    out.middleRows(start, spec.time_width).setZero();
  }
  for (int32_t m = 0; m < spec.feat_masks; ++m) {
    int32_t start = UniformInt(rng, 0, F - spec.feat_width);
    out.middleCols(start, spec.feat_width).setZero();
  }
  return out;
}

std::vector<Utterance> LengthFilter(const std::vector<Utterance> &utts,
                                    int32_t max_frames, int32_t max_labels,
                                    int32_t subsample, FilterReport *report) {
  if (subsample < 1) throw Error("invalid-arguments", "subsample must be >= 1");
  FilterReport rep;
  std::vector<Utterance> out;
  for (const auto &u : utts) {
    const int32_t T = u.NumFrames();
    const int32_t S = static_cast<int32_t>(u.reference.size());
    if (T > max_frames) {
      ++rep.too_long;
    } else if (S > max_labels) {
      ++rep.too_many;
    } else if (S > (T + subsample - 1) / subsample) {
      ++rep.infeasible;
    } else {
      out.push_back(u);
      ++rep.kept;
    }
  }
  if (report) *report = rep;
  return out;
}

void WriteDataset(const std::string &dir, const Dataset &data) {
  fs::create_directories(fs::path(dir) / "feats");
  auto manifest = OpenOut(fs::path(dir) / "manifest.txt");
  auto transcript = OpenOut(fs::path(dir) / "transcript.txt");
  manifest << "#manifest v1 feat_dim=" << data.feat_dim << " vocab=" << data.vocab
           << '\n';
  for (const auto &u : data.utts) {
    if (u.feats.cols() != data.feat_dim)
      throw Error("invalid-arguments", "feature width mismatch in " + u.id);
    manifest << u.id << ' ' << u.feats.rows() << ' ' << u.reference.size() << '\n';
    transcript << u.id;
    for (Label l : u.reference) transcript << ' ' << l;
    transcript << '\n';
    auto blob = OpenOut(fs::path(dir) / "feats" / (u.id + ".f32"), std::ios::binary);
    for (Eigen::Index i = 0; i < u.feats.size(); ++i)
      binio::WriteF32(blob, static_cast<float>(u.feats.data()[i]));
  }
}

Dataset ReadDataset(const std::string &dir) {
  Dataset data;
  auto manifest = OpenIn(fs::path(dir) / "manifest.txt");
  std::string line;
  if (!std::getline(manifest, line) ||
      std::sscanf(line.c_str(), "#manifest v1 feat_dim=%d vocab=%d", &data.feat_dim,
                  &data.vocab) != 2)
    throw Error("format", "bad manifest header in " + dir);
  struct Row {
    std::string id;
    int64_t T, S;
  };
  std::vector<Row> rows;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r;
    if (!(ls >> r.id >> r.T >> r.S) || r.T < 0 || r.S < 0)
      throw Error("format", "bad manifest line: '" + line + "'");
    rows.push_back(r);
  }
  std::map<std::string, LabelSeq> refs;
  auto transcript = OpenIn(fs::path(dir) / "transcript.txt");
  while (std::getline(transcript, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    LabelSeq labels;
    Label l;
    while (ls >> l) {
      if (l < 0 || l >= data.vocab)
        throw Error("format", "label out of range in transcript of " + id);
      labels.push_back(l);
    }
    refs[id] = std::move(labels);
  }
  for (const Row &r : rows) {
    Utterance u;
    u.id = r.id;
    auto it = refs.find(r.id);
    if (it == refs.end()) throw Error("format", "no transcript for " + r.id);
    u.reference = it->second;
    if (static_cast<int64_t>(u.reference.size()) != r.S)
      throw Error("format", "label count mismatch for " + r.id);
    const fs::path blob_path = fs::path(dir) / "feats" / (r.id + ".f32");
    auto blob = OpenIn(blob_path, std::ios::binary);
    if (fs::file_size(blob_path) != static_cast<uintmax_t>(r.T * data.feat_dim * 4))
      throw Error("format", "feature blob size mismatch for " + r.id);
    u.feats.resize(r.T, data.feat_dim);
    for (Eigen::Index i = 0; i < u.feats.size(); ++i)
      u.feats.data()[i] = binio::ReadF32(blob);
    data.utts.push_back(std::move(u));
  }
  return data;
}

std::vector<std::vector<std::string>> LabelSentences(const Dataset &data) {
  std::vector<std::vector<std::string>> out;
  for (const auto &u : data.utts) {
    std::vector<std::string> words;
    for (Label l : u.reference) words.push_back(std::to_string(l));
    out.push_back(std::move(words));
  }
  return out;
}

}  // namespace monotrans
