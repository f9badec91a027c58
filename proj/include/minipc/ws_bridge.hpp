#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "minipc/debug_session.hpp"

namespace minipc {

/// JSON-over-WebSocket console bridge on `/ws`, plus `GET /state`.
/// Commands map onto the same DebugSession operations the RSP server uses.
/// Like RspServer, it needs the guest loop serving commands on another
/// thread for its whole lifetime, including stop().
class WsBridge {
 public:
  /// Binds immediately; port 0 picks an ephemeral port.
  WsBridge(DebugSession& session, uint16_t port, const std::string& bind_addr = "127.0.0.1");
  ~WsBridge();
  WsBridge(const WsBridge&) = delete;
  WsBridge& operator=(const WsBridge&) = delete;

  uint16_t port() const;
  void start();
  void stop();

  /// Handles one client message and returns the events it produces
  /// immediately (run-control results arrive later as broadcasts). Exposed
  /// for tests; must not run on the monitor thread.
  std::vector<std::string> handle_message(const std::string& text);
  /// `{"event":"state",...}` for the current guest registers.
  std::string state_json();

  struct Impl;  // opaque; public so the connection classes can reach it

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace minipc
