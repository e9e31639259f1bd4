#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace psim {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_text_file_atomic(const std::filesystem::path& path,
                            std::string_view content);

}  // namespace psim
