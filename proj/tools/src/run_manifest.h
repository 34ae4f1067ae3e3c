#pragma once

#include <map>
#include <string>
#include <vector>

#include "config_file.h"

namespace graphseq::cli {

// Hex SHA-256 of a file's bytes. Throws IoError.
std::string sha256_file(const std::string& path);

struct RunManifest {
  std::string command;
  ConfigSections config;  // fully resolved
  std::map<std::string, std::string> seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;

  // JSON with a checksum for every input and output.
  std::string to_json() const;
  // Written to a temporary sibling and renamed into place.
  void write(const std::string& path) const;
};

}  // namespace graphseq::cli
