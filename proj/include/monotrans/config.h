// monotrans/config.h

// Versioned key-value configuration. File layout:
//
//   #config v1
//   # comment
//   key = value
//
// Every key has a registered default; unknown keys are rejected with the
// list of valid ones.

#ifndef MONOTRANS_CONFIG_H_
#define MONOTRANS_CONFIG_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace monotrans {

class Config {
 public:
  /// All keys with their defaults.
  static Config Defaults();

  /// Defaults overlaid with the file. Throws Error("missing-file") naming the
  /// path, Error("format") or Error("unknown-key").
  static Config Load(const std::string &path);
  void Merge(std::istream &is, const std::string &origin);

  /// Throws Error("unknown-key") listing the valid keys.
  void Set(const std::string &key, const std::string &value);
  /// "key=value" override as given on the command line.
  void SetAssignment(const std::string &assignment);

  const std::string &Str(const std::string &key) const;
  double Double(const std::string &key) const;
  int64_t Int(const std::string &key) const;
  bool Bool(const std::string &key) const;
  /// Comma-separated doubles.
  std::vector<double> DoubleList(const std::string &key) const;

  std::vector<std::string> Keys() const;
  void Write(std::ostream &os) const;

  bool operator==(const Config &) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace monotrans

#endif  // MONOTRANS_CONFIG_H_
