#pragma once

#include <map>
#include <string>

namespace graphseq::cli {

// section -> key -> value
using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

// INI-style file: `[section]` headers, `key = value` lines, `;` or `#`
// comments. Throws IoError if unreadable, ConfigError if malformed or if a
// section outside {model, train, data, eval} appears.
ConfigSections load_config(const std::string& path);
ConfigSections parse_config(const std::string& text);

std::string format_config(const ConfigSections& config);

}  // namespace graphseq::cli
