#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>

#include "minipc/debug_session.hpp"

namespace minipc {

class ServerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Remote serial protocol over TCP. One client at a time; further
/// connections are closed on accept. The guest loop must be running (with
/// linger) on another thread, since every command goes through
/// Monitor::call.
class RspServer {
 public:
  /// Binds immediately; port 0 picks an ephemeral port.
  RspServer(DebugSession& session, uint16_t port, const std::string& bind_addr = "127.0.0.1");
  ~RspServer();
  RspServer(const RspServer&) = delete;
  RspServer& operator=(const RspServer&) = delete;

  uint16_t port() const { return port_; }
  void start();
  void stop();
  /// Number of clients served to completion so far.
  unsigned sessions_finished() const { return finished_; }

 private:
  void run();
  void serve(int fd);

  DebugSession& session_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<unsigned> finished_{0};
  std::thread thread_;
};

}  // namespace minipc
