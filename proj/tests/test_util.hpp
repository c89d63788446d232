#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace testutil {

// Fresh scratch directory under WAFERTOPO_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("WAFERTOPO_TEST_TMP");
  std::filesystem::path p = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "wafertopo_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
