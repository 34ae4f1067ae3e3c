#include "config_file.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <sstream>

#include "graphseq/errors.h"

namespace graphseq::cli {

namespace {

const std::set<std::string> kSections = {"model", "train", "data", "eval"};

// The INI parser only knows `;` comments.
std::string strip_hash_comments(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

ConfigSections parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(strip_hash_comments(text));
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  ConfigSections out;
  for (const auto& [name, section] : tree) {
    if (section.empty()) {
      throw ConfigError("config: key outside a section: " + name);
    }
    if (!kSections.count(name)) {
      throw ConfigError("config: unknown section [" + name + "]");
    }
    auto& dst = out[name];
    for (const auto& [key, value] : section) {
      dst[key] = value.get_value<std::string>();
    }
  }
  return out;
}

ConfigSections load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const ConfigSections& config) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, section] : config) {
    if (!first) out << '\n';
    first = false;
    out << '[' << name << "]\n";
    for (const auto& [k, v] : section) out << k << " = " << v << '\n';
  }
  return out.str();
}

}  // namespace graphseq::cli
