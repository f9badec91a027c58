#include "minipc/rsp_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>

#include "minipc/rsp.hpp"

namespace minipc {

namespace {

constexpr int kPollMs = 10;

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<size_t>(n));
  }
  return true;
}

}  // namespace

RspServer::RspServer(DebugSession& session, uint16_t port, const std::string& bind_addr)
    : session_(session) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ServerError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ServerError("bad bind address " + bind_addr);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 4) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw ServerError("cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

RspServer::~RspServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void RspServer::start() {
  if (thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void RspServer::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void RspServer::run() {
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, kPollMs) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    serve(fd);
    ::close(fd);
    ++finished_;
  }
}

void RspServer::serve(int fd) {
  Monitor& mon = session_.monitor();
  auto events = mon.subscribe();

  // Take run control if nobody else has it, freeze, and report why the
  // guest is stopped.
  const std::string hello = mon.call([&] {
    session_.acquire(Controller::Rsp);
    if (mon.run_state() == Monitor::RunState::Shutdown) return std::string("W00");
    if (mon.run_state() == Monitor::RunState::Running && session_.may_control(Controller::Rsp)) {
      session_.pause();
    }
    return stop_code(mon.last_stop());
  });
  while (events->try_pop()) {
  }

  rsp::Parser parser;
  std::string last_sent = rsp::frame(hello);
  bool alive = send_all(fd, last_sent);
  bool killed = false;
  std::optional<uint64_t> pending;  // a c/s waiting for a stop beyond this seq

  const auto reply = [&](const std::string& payload) {
    last_sent = rsp::frame(payload);
    alive = send_all(fd, last_sent) && alive;
  };

  char buf[4096];
  while (alive && !killed && !stop_) {
    if (pending) {
      // Block on the event queue rather than the socket while the guest
      // runs; a 0x03 is still picked up within one poll period.
      auto first = events->wait_pop(std::chrono::milliseconds(kPollMs));
      for (auto ev = std::move(first); ev; ev = events->try_pop()) {
        if (ev->kind == MonitorEvent::Kind::Stopped && ev->seq > *pending) {
          pending.reset();
          reply(stop_code(ev->stop));
          break;
        }
        if (ev->kind == MonitorEvent::Kind::Shutdown) {
          pending.reset();
          reply("W00");
          break;
        }
      }
    } else {
      while (events->try_pop()) {
      }
    }

    pollfd pfds[2] = {{fd, POLLIN, 0}, {listen_fd_, POLLIN, 0}};
    if (::poll(pfds, 2, pending ? 0 : kPollMs) <= 0) continue;
    if (pfds[1].revents & POLLIN) {
      // Only one debugger at a time.
      const int extra = ::accept(listen_fd_, nullptr, nullptr);
      if (extra >= 0) ::close(extra);
    }
    if (!(pfds[0].revents & (POLLIN | POLLHUP | POLLERR))) continue;
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      alive = false;
      break;
    }
    parser.feed(std::string_view(buf, static_cast<size_t>(n)));
    while (auto e = parser.next()) {
      if (const auto* a = std::get_if<rsp::Ack>(&*e)) {
        if (!a->positive) alive = send_all(fd, last_sent) && alive;
      } else if (std::holds_alternative<rsp::BadChecksum>(*e)) {
        alive = send_all(fd, "-") && alive;
      } else if (std::holds_alternative<rsp::Interrupt>(*e)) {
        if (pending) mon.call([&] { session_.pause(); });
      } else {
        const auto& pkt = std::get<rsp::Packet>(*e);
        alive = send_all(fd, "+") && alive;
        const RspReply r = mon.call([&] { return session_.handle_rsp(pkt.payload, Controller::Rsp); });
        if (r.deferred) {
          pending = r.after_seq;
        } else {
          reply(r.payload);
        }
        if (r.detach) {
          killed = true;
          break;
        }
      }
    }
  }

  // Fail open: a vanished debugger must not leave the guest wedged.
  mon.call([&] {
    if (!killed && session_.may_control(Controller::Rsp)) session_.detach();
    session_.release(Controller::Rsp);
  });
  mon.unsubscribe(events);
}

}  // namespace minipc
