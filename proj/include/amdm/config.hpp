#pragma once

// Flat UTF-8 configuration files: one `key = value` per line, `#` starts a
// comment, blank lines ignored. Later duplicates override earlier ones.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace amdm {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

ConfigEntries parse_config(const std::string& text);
ConfigEntries load_config(const std::filesystem::path& path);
std::string format_config(const ConfigEntries& entries);

}  // namespace amdm
