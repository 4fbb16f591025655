// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "evomerge/errors.hpp"

namespace evomerge {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;

  bool ok() const { return exit_code == 0 && !timed_out; }
};

/// Runs `argv`, feeding `input` on stdin and capturing stdout/stderr.
/// The child is killed after `timeout_sec` seconds (0 = no timeout).
inline ProcessResult run_process(const std::vector<std::string>& argv,
                                 const std::string& input = {},
                                 double timeout_sec = 0.0) {
  if (argv.empty()) throw ProcessError("run_process: empty argv");

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
    throw ProcessError("run_process: pipe() failed");
  }

  pid_t pid = fork();
  if (pid < 0) throw ProcessError("run_process: fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(in_pipe[0]); close(in_pipe[1]);
    close(out_pipe[0]); close(out_pipe[1]);
    close(err_pipe[0]); close(err_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    std::perror("execvp");
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
  fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

  ProcessResult result;
  std::size_t written = 0;
  bool stdin_open = true, stdout_open = true, stderr_open = true;
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration<double>(timeout_sec);

  while (stdout_open || stderr_open || stdin_open) {
    struct pollfd fds[3];
    int nfds = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (stdin_open) {
      idx_in = nfds;
      fds[nfds++] = {in_pipe[1], POLLOUT, 0};
    }
    if (stdout_open) {
      idx_out = nfds;
      fds[nfds++] = {out_pipe[0], POLLIN, 0};
    }
    if (stderr_open) {
      idx_err = nfds;
      fds[nfds++] = {err_pipe[0], POLLIN, 0};
    }
    int wait_ms = 200;
    if (timeout_sec > 0.0) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                      deadline - std::chrono::steady_clock::now())
                      .count();
      if (left <= 0) {
        kill(pid, SIGKILL);
        result.timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(std::min<long long>(left, 200));
    }
    poll(fds, static_cast<nfds_t>(nfds), wait_ms);

    char buf[65536];
    if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
      if (written >= input.size() || (fds[idx_in].revents & (POLLERR | POLLHUP))) {
        close(in_pipe[1]);
        stdin_open = false;
      } else {
        ssize_t n = write(in_pipe[1], input.data() + written, input.size() - written);
        if (n > 0) {
          written += static_cast<std::size_t>(n);
          if (written >= input.size()) {
            close(in_pipe[1]);
            stdin_open = false;
          }
        } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
          close(in_pipe[1]);
          stdin_open = false;
        }
      }
    }
    if (stdin_open && written >= input.size()) {
      close(in_pipe[1]);
      stdin_open = false;
    }
    if (idx_out >= 0 && (fds[idx_out].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(out_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        result.out.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        close(out_pipe[0]);
        stdout_open = false;
      }
    }
    if (idx_err >= 0 && (fds[idx_err].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(err_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        result.err.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        close(err_pipe[0]);
        stderr_open = false;
      }
    }
  }
  if (stdin_open) close(in_pipe[1]);
  if (stdout_open) close(out_pipe[0]);
  if (stderr_open) close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace evomerge
