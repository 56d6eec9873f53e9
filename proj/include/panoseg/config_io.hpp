#pragma once

#include <map>
#include <string>
#include <vector>

#include "panoseg/error.hpp"

namespace panoseg {

// Plain-text "key = value" files: one pair per line, '#' comments.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);
KeyValues parse_key_values(const std::string& text);

int64_t kv_int(const KeyValues& kv, const std::string& key, int64_t fallback);
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<int> kv_int_list(const KeyValues& kv, const std::string& key,
                             const std::vector<int>& fallback);

}  // namespace panoseg
