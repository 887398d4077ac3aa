// monotrans/config.cc

#include "monotrans/config.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "monotrans/base.h"

namespace monotrans {

namespace {

const std::vector<std::pair<std::string, std::string>> &DefaultTable() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"work_dir", "work"},
      {"seed", "1"},
      // synthetic corpus
      {"data.vocab", "10"},
      {"data.num_train", "2000"},
      {"data.num_dev", "200"},
      {"data.num_test", "200"},
      {"data.min_len", "3"},
      {"data.max_len", "10"},
      {"data.min_frames_per_label", "1"},
      {"data.max_frames_per_label", "3"},
      {"data.feat_dim", "12"},
      {"data.noise_sigma", "0.9"},
      {"data.grammar_sharpness", "2.0"},
      {"data.max_frames", "0"},  // 0: no limit
      {"data.max_labels", "0"},
      // network
      {"model.context_k", "1"},
      {"model.enc_layers", "2"},
      {"model.enc_dim", "48"},
      {"model.enc_context", "1"},
      {"model.pred_dim", "16"},
      {"model.joint_dim", "48"},
      {"model.subsample", "1"},
      {"model.dropout", "0.1"},
      {"model.aux_middle_layer", "0"},
      {"model.aux_heads", "true"},
      // optimizer
      {"optim.l2", "5e-6"},
      {"optim.lr_final", "1e-6"},
      // spectral-style masking, stages 1 and 2
      {"mask.time_masks", "1"},
      {"mask.time_width", "2"},
      {"mask.feat_masks", "1"},
      {"mask.feat_width", "2"},
      // alignment model
      {"ctc.epochs", "8"},
      {"ctc.lr_peak", "3e-3"},
      {"ctc.batch_frames", "400"},
      // stage 1
      {"stage1.epochs", "20"},
      {"stage1.lr_peak", "3e-3"},
      {"stage1.batch_frames", "400"},
      {"stage1.dropout", "0.1"},
      {"stage1.chunk_frames", "0"},  // 0: whole utterances
      {"loss.label_smooth", "0.2"},
      {"loss.boost_scale", "5"},
      {"loss.focal_gamma", "1"},
      {"loss.enc_scale", "1"},
      {"loss.middle_scale", "0.3"},
      {"loss.clip_norm", "20"},
      // stage 2
      {"stage2.epochs", "10"},
      {"stage2.lr_peak", "1e-3"},
      {"stage2.batch_frames", "400"},
      {"stage2.dropout", "0.1"},
      // stage 3
      {"stage3.epochs", "2"},
      {"stage3.lr", "1e-5"},
      {"stage3.batch_lists", "8"},
      {"stage3.n", "4"},
      {"stage3.subset", "0.25"},
      {"stage3.seed", "7"},
      {"stage3.beta", "0"},  // 0: 1 / lambda1
      {"stage3.fs_aux_scale", "0.05"},
      {"stage3.gen_lm_scale", "auto"},
      {"stage3.gen_beam", "8"},
      // language models
      {"lm.order", "3"},
      {"lm.gen_order", "2"},
      {"lm.discount", "0.5"},
      // search and scoring
      {"decode.beam", "8"},
      {"decode.lm_scale", "0"},
      {"decode.ilm_scale", "0"},
      {"decode.lexicon", ""},
      {"tune.lm_grid", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.8,1.0"},
      {"tune.ilm_grid", "0"},
      {"select.by", "dev_loss"},  // dev_loss | wer
  };
  return table;
}

std::string Trim(const std::string &s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::Defaults() {
  Config c;
  for (const auto &[k, v] : DefaultTable()) c.values_[k] = v;
  return c;
}

Config Config::Load(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error("missing-file", "cannot open config file " + path);
  Config c = Defaults();
  c.Merge(is, path);
  return c;
}

void Config::Merge(std::istream &is, const std::string &origin) {
  std::string line;
  if (!std::getline(is, line) || Trim(line) != "#config v1")
    throw Error("format", origin + ": first line must be '#config v1'");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error("format", origin + ":" + std::to_string(lineno) +
                                ": expected 'key = value'");
    Set(Trim(t.substr(0, eq)), Trim(t.substr(eq + 1)));
  }
}

void Config::Set(const std::string &key, const std::string &value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    std::string valid;
    for (const auto &[k, v] : values_) valid += (valid.empty() ? "" : ",") + k;
    throw Error("unknown-key", "unknown config key '" + key + "'; valid keys: " + valid);
  }
  it->second = value;
}

void Config::SetAssignment(const std::string &assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error("format", "override must look like key=value: " + assignment);
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

const std::string &Config::Str(const std::string &key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown-key", "unknown config key '" + key + "'");
  return it->second;
}

double Config::Double(const std::string &key) const {
  try {
    return ParseDouble(Str(key));
  } catch (const Error &) {
    throw Error("format", "config key " + key + " expects a number, got '" +
                              Str(key) + "'");
  }
}

int64_t Config::Int(const std::string &key) const {
  const std::string &s = Str(key);
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::logic_error &) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size())
    throw Error("format", "config key " + key + " expects an integer, got '" + s + "'");
  return v;
}

bool Config::Bool(const std::string &key) const {
  const std::string &s = Str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("format", "config key " + key + " expects true/false, got '" + s + "'");
}

std::vector<double> Config::DoubleList(const std::string &key) const {
  std::vector<double> out;
  std::stringstream ss(Str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(ParseDouble(item));
  }
  return out;
}

std::vector<std::string> Config::Keys() const {
  std::vector<std::string> keys;
  for (const auto &[k, v] : values_) keys.push_back(k);
  return keys;
}

void Config::Write(std::ostream &os) const {
  os << "#config v1\n";
  for (const auto &[k, v] : values_) os << k << " = " << v << '\n';
}

}  // namespace monotrans
