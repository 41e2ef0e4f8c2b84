#pragma once

#include <filesystem>
#include <string>

namespace carf {

struct CommandResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stderr_text;
  double seconds = 0;
};

// Runs `command` through /bin/sh in `work_dir`. stdout is discarded, stderr
// captured. The process group is killed when `timeout_seconds` elapses.
CommandResult run_command(const std::string& command, const std::filesystem::path& work_dir,
                          double timeout_seconds);

}  // namespace carf
