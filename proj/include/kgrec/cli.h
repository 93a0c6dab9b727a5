#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

namespace kgrec {

// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

}  // namespace kgrec
