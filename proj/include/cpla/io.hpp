#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace cpla {

// All throw IoError on failure; JSON parse failures are ValidationError.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

nlohmann::json read_json_file(const std::string& path);
/// Pretty-printed with a trailing newline, so identical values give identical bytes.
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace cpla
