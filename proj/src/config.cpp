#include "uiesnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace uiesnn {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

void parse_into(Config& cfg, std::istream& in, const std::string& name,
                const fs::path& dir, int depth) {
  if (depth > 8)
    throw ConfigError(name + ": include depth exceeds 8 (cycle?)");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.rfind("include ", 0) == 0) {
      const std::string rel = trim(line.substr(8));
      const fs::path inc = dir / rel;
      std::ifstream f(inc);
      if (!f)
        throw ConfigError(name + ":" + std::to_string(lineno) +
                          ": cannot open include '" + inc.string() + "'");
      parse_into(cfg, f, inc.string(), inc.parent_path(), depth + 1);
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
    cfg.set(key, value, name, lineno);
  }
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Config cfg;
  parse_into(cfg, in, path, fs::path(path).parent_path(), 0);
  return cfg;
}

Config Config::parse_string(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  Config cfg;
  parse_into(cfg, in, name, fs::current_path(), 0);
  return cfg;
}

void Config::set(const std::string& key, const std::string& value,
                 const std::string& file, int line) {
  for (Entry& e : entries_) {
    if (e.key == key) {
      e = Entry{key, value, file, line};
      return;
    }
  }
  entries_.push_back(Entry{key, value, file, line});
}

const Config::Entry* Config::find(const std::string& key) const {
  for (const Entry& e : entries_)
    if (e.key == key) return &e;
  return nullptr;
}

const Config::Entry& Config::require(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) throw ConfigError("missing required config key '" + key + "'");
  return *e;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

namespace {
[[noreturn]] void bad_value(const Config::Entry& e, const char* want) {
  throw ConfigError(e.file + ":" + std::to_string(e.line) + ": key '" + e.key +
                    "': cannot parse '" + e.value + "' as " + want);
}
}  // namespace

std::string Config::get_string(const std::string& key) const {
  return require(key).value;
}
std::string Config::get_string(const std::string& key,
                               const std::string& dflt) const {
  const Entry* e = find(key);
  return e ? e->value : dflt;
}

long long Config::get_int(const std::string& key) const {
  const Entry& e = require(key);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) bad_value(e, "integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(e, "integer");
  }
}
long long Config::get_int(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

double Config::get_float(const std::string& key) const {
  const Entry& e = require(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) bad_value(e, "number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(e, "number");
  }
}
double Config::get_float(const std::string& key, double dflt) const {
  return has(key) ? get_float(key) : dflt;
}

bool Config::get_bool(const std::string& key) const {
  const Entry& e = require(key);
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, "bool (true/false/1/0)");
}
bool Config::get_bool(const std::string& key, bool dflt) const {
  return has(key) ? get_bool(key) : dflt;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const Entry& e = require(key);
  std::vector<int> out;
  std::istringstream is(e.value);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    cell = trim(cell);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(cell, &used));
      if (used != cell.size()) bad_value(e, "comma-separated integers");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      bad_value(e, "comma-separated integers");
    }
  }
  if (out.empty()) bad_value(e, "comma-separated integers");
  return out;
}

std::string Config::serialize() const {
  std::vector<const Entry*> sorted;
  for (const Entry& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const Entry* a, const Entry* b) { return a->key < b->key; });
  std::ostringstream os;
  for (const Entry* e : sorted) os << e->key << " = " << e->value << '\n';
  return os.str();
}

void Config::reject_unknown_keys(const std::vector<std::string>& known) const {
  for (const Entry& e : entries_) {
    if (std::find(known.begin(), known.end(), e.key) == known.end())
      throw ConfigError(e.file + ":" + std::to_string(e.line) +
                        ": unknown config key '" + e.key + "'");
  }
}

}  // namespace uiesnn
