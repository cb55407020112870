#pragma once

// Flat key=value run-configuration files.
//
//   # comment lines and blank lines are ignored
//   version=1
//   kind=mvsk
//   method=qmvsk
//
// The version key is mandatory (only version 1 exists) and every other key
// may appear at most once.  Which keys are meaningful is the caller's
// business: the reader hands back the entries in file order and the command
// line layer rejects names it does not recognize, so a stale or misspelled
// config fails instead of being silently ignored.

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hop/types.hpp"

namespace hop {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;  ///< 1-based line number, for error reporting
};

inline std::vector<ConfigEntry> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "' for reading");

  std::vector<ConfigEntry> entries;
  bool saw_version = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos || eq == start)
      throw DataError("config '" + path + "', line " + std::to_string(line_no) +
                      ": expected key=value, got '" + line + "'");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? std::string() : value.substr(vstart);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();

    if (key == "version") {
      if (saw_version)
        throw DataError("config '" + path + "', line " + std::to_string(line_no) +
                        ": duplicate version key");
      if (value != "1")
        throw DataError("config '" + path + "', line " + std::to_string(line_no) +
                        ": unsupported version '" + value + "' (this reader understands 1)");
      saw_version = true;
      continue;
    }
    for (const ConfigEntry& e : entries)
      if (e.key == key)
        throw DataError("config '" + path + "', line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "' (first on line " + std::to_string(e.line) +
                        ")");
    entries.push_back({std::move(key), std::move(value), line_no});
  }
  if (!saw_version)
    throw DataError("config '" + path + "': missing mandatory 'version=1' line");
  return entries;
}

}  // namespace hop
