#include "carf/subprocess.hpp"

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "carf/error.hpp"

namespace carf {

CommandResult run_command(const std::string& command, const std::filesystem::path& work_dir,
                          double timeout_seconds) {
  std::filesystem::create_directories(work_dir);
  std::string err_template = (work_dir / "carf-stderr-XXXXXX").string();
  const int err_fd = mkstemp(err_template.data());
  if (err_fd < 0) throw EncoderError("cannot create stderr capture file in " + work_dir.string());

  const auto started = std::chrono::steady_clock::now();
  const pid_t pid = fork();
  if (pid < 0) {
    close(err_fd);
    std::filesystem::remove(err_template);
    throw EncoderError("fork failed for: " + command);
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (chdir(work_dir.c_str()) != 0) _exit(127);
    const int null_fd = open("/dev/null", O_WRONLY);
    if (null_fd >= 0) dup2(null_fd, STDOUT_FILENO);
    dup2(err_fd, STDERR_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(err_fd);

  CommandResult result;
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed > timeout_seconds) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!result.timed_out) {
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }
  std::ifstream err(err_template);
  std::stringstream ss;
  ss << err.rdbuf();
  result.stderr_text = ss.str();
  std::filesystem::remove(err_template);
  return result;
}

}  // namespace carf
