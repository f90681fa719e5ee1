#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <string>

#include "srf/diffusion/protocol.hpp"

namespace srf::diffusion {

/// Denoiser served by a child process (`/bin/sh -c command`) over its
/// standard streams. One request in flight at a time; any transport failure
/// leaves the handle unusable.
class ExternalDenoiser final : public Denoiser {
 public:
  explicit ExternalDenoiser(const std::string& command,
                            std::chrono::milliseconds timeout = std::chrono::seconds(120))
      : timeout_(timeout) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw Error(ErrorCode::BackendError, std::string("socketpair: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw Error(ErrorCode::BackendError, std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
    try {
      protocol::check_hello(roundtrip(protocol::hello_request()));
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ExternalDenoiser(const ExternalDenoiser&) = delete;
  ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;
  ~ExternalDenoiser() override { shutdown(); }

  DenoiserOutput denoise(const Latent& z, int t, std::span<const TokenId> tokens) override {
    std::lock_guard lock(mutex_);
    auto out = protocol::parse_denoise_response(roundtrip(protocol::denoise_request(z, t, tokens)), z, tokens);
    if (!out.eps.finite()) throw Error(ErrorCode::ProtocolError, "backend returned non-finite eps");
    return out;
  }

  Latent attention_vjp(const Latent& z, int t, const AttentionStack& grad) override {
    std::lock_guard lock(mutex_);
    return protocol::parse_vjp_response(roundtrip(protocol::vjp_request(z, t, grad)), z);
  }

 private:
  std::string roundtrip(const std::string& payload) {
    if (broken_) throw Error(ErrorCode::ProtocolError, "backend connection is no longer usable");
    try {
      send_all(protocol::frame(payload));
      return protocol::read_frame([this](char* dst, std::size_t n) { return receive(dst, n); }, offset_);
    } catch (...) {
      broken_ = true;
      throw;
    }
  }

  void wait_ready(short events) {
    pollfd p{fd_, events, 0};
    for (;;) {
      const int r = ::poll(&p, 1, static_cast<int>(timeout_.count()));
      if (r > 0) return;
      if (r == 0) throw Error(ErrorCode::Timeout, "backend did not respond within " + std::to_string(timeout_.count()) + " ms");
      if (errno != EINTR) throw Error(ErrorCode::BackendError, std::string("poll: ") + std::strerror(errno));
    }
  }

  void send_all(const std::string& bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      wait_ready(POLLOUT);
      const ssize_t r = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (r < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw Error(ErrorCode::BackendError, std::string("backend closed its input: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(r);
    }
  }

  std::size_t receive(char* dst, std::size_t n) {
    for (;;) {
      wait_ready(POLLIN);
      const ssize_t r = ::recv(fd_, dst, n, 0);
      if (r >= 0) return static_cast<std::size_t>(r);
      if (errno != EINTR && errno != EAGAIN) return 0;
    }
  }

  void shutdown() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(10000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::size_t offset_ = 0;
  bool broken_ = false;
  std::mutex mutex_;
};

}  // namespace srf::diffusion
