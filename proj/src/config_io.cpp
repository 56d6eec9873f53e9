#include "panoseg/config_io.hpp"

#include <fstream>
#include <sstream>

namespace panoseg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("unreadable path", path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_key_values(text);
}

void write_key_values(const std::string& path, const KeyValues& kv) {
  std::ofstream out(path);
  if (!out) throw Error("unwritable path", path);
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
}

int64_t kv_int(const KeyValues& kv, const std::string& key, int64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw Error("invalid config value", key + " = " + it->second);
  }
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw Error("invalid config value", key + " = " + it->second);
  }
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::vector<int> kv_int_list(const KeyValues& kv, const std::string& key,
                             const std::vector<int>& fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<int> out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw Error("invalid config value", key + " = " + it->second);
    }
  }
  if (out.empty()) throw Error("invalid config value", key + " is empty");
  return out;
}

}  // namespace panoseg
