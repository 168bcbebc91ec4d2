#pragma once

#include <string>
#include <vector>

#include "uiesnn/tensor.hpp"

namespace uiesnn {

// Bad configuration file or value (maps to process exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value configuration with '#' comments and an
// `include <relative-path>` mechanism (later assignments win, so an including
// file overrides what it includes). Keys keep their source file/line for
// error messages.
class Config {
 public:
  struct Entry {
    std::string key, value, file;
    int line = 0;
  };

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& name = "<string>");

  bool has(const std::string& key) const;
  // Typed getters throw ConfigError naming the key (and source line when the
  // key exists but fails to parse). The no-default forms require the key.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long dflt) const;
  double get_float(const std::string& key) const;
  double get_float(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<int> get_int_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value,
           const std::string& file = "<set>", int line = 0);

  // Resolved (includes flattened, last assignment per key) round-trippable
  // text form: sorted key=value lines.
  std::string serialize() const;

  const std::vector<Entry>& entries() const { return entries_; }
  // Throws ConfigError for any key not in `known`, naming key and line.
  void reject_unknown_keys(const std::vector<std::string>& known) const;

 private:
  const Entry* find(const std::string& key) const;
  const Entry& require(const std::string& key) const;

  std::vector<Entry> entries_;  // one entry per key, last assignment wins
};

}  // namespace uiesnn
