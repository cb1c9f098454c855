#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace saanet {

using KeyValues = std::map<std::string, std::string>;

// Flat "key = value" text; '#' starts a comment, blank lines are ignored.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

// Entries of `overrides` replace those of `base`.
KeyValues merge(KeyValues base, const KeyValues& overrides);

// Typed lookups; a present but malformed value throws ConfigError.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
int64_t kv_int(const KeyValues& kv, const std::string& key, int64_t fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

}  // namespace saanet
