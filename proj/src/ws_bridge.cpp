#include "minipc/ws_bridge.hpp"

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <future>
#include <mutex>
#include <set>
#include <thread>

#include "json.hpp"
#include "minipc/assembler.hpp"
#include "minipc/rsp.hpp"

namespace minipc {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr size_t kMaxMem = 4096;
constexpr uint32_t kMaxDisasm = 64;

std::string dump(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string error_event(const std::string& message) {
  return dump({{"event", "error"}, {"message", message}});
}

std::string stopped_event(const char* reason, uint32_t pc) {
  return dump({{"event", "stopped"}, {"reason", reason}, {"pc", pc}});
}

std::optional<uint32_t> get_u32(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_unsigned()) return std::nullopt;
  const auto v = it->get<uint64_t>();
  if (v > 0xFFFFFFFFu) return std::nullopt;
  return static_cast<uint32_t>(v);
}

class WsSession;

}  // namespace

struct WsBridge::Impl {
  Impl(DebugSession& s, uint16_t port, const std::string& bind_addr)
      : session(s), mon(s.monitor()), acceptor(ioc) {
    const tcp::endpoint ep(net::ip::make_address(bind_addr), port);
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  void do_accept();
  void broadcast(std::string msg);
  void pump();
  std::string state_json();
  std::vector<std::string> handle(const std::string& text);
  void on_open(const std::shared_ptr<WsSession>& s);
  void on_close(const std::shared_ptr<WsSession>& s);
  std::string latest_state() {
    std::lock_guard lock(state_mu);
    return latest;
  }

  DebugSession& session;
  Monitor& mon;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread pump_thread;
  std::shared_ptr<EventQueue> events;
  std::atomic<bool> stopping{false};
  std::mutex state_mu;
  std::string latest;
  std::set<std::shared_ptr<WsSession>> sessions;  // io thread only
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, WsBridge::Impl& impl) : ws_(std::move(socket)), impl_(impl) {}

  void accept(http::request<http::string_body> req) {
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->open();
    });
  }

  void send(std::string msg) {
    out_.push_back(std::move(msg));
    if (out_.size() == 1) write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    impl_.on_close(shared_from_this());
    beast::error_code ec;
    ws_.next_layer().socket().close(ec);
  }

 private:
  void open() {
    impl_.on_open(shared_from_this());
    read_next();
  }

  void read_next() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) return self->close();
      const std::string text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      for (auto& reply : self->impl_.handle(text)) self->send(std::move(reply));
      self->read_next();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(out_.front()),
                    [self = shared_from_this()](beast::error_code ec, size_t) {
                      if (ec) return self->close();
                      self->out_.pop_front();
                      if (!self->out_.empty()) self->write_next();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  WsBridge::Impl& impl_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, WsBridge::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

  void run() {
    http::async_read(stream_, buf_, req_,
                     [self = shared_from_this()](beast::error_code ec, size_t) {
                       if (!ec) self->route();
                     });
  }

 private:
  void route() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        std::make_shared<WsSession>(stream_.release_socket(), impl_)->accept(std::move(req_));
        return;
      }
      return respond(http::status::not_found, "text/plain", "not found\n");
    }
    if (req_.method() == http::verb::get && req_.target() == "/state") {
      return respond(http::status::ok, "application/json", impl_.latest_state() + "\n");
    }
    respond(http::status::not_found, "text/plain", "not found\n");
  }

  void respond(http::status status, const char* type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, type);
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  WsBridge::Impl& impl_;
};

}  // namespace

void WsBridge::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), *this)->run();
    do_accept();
  });
}

void WsBridge::Impl::broadcast(std::string msg) {
  net::post(ioc, [this, msg = std::move(msg)] {
    for (const auto& s : sessions) s->send(msg);
  });
}

void WsBridge::Impl::on_open(const std::shared_ptr<WsSession>& s) {
  sessions.insert(s);
  const auto [state, stopped] = mon.call([&] {
    session.acquire(Controller::Console);
    std::string st;
    if (mon.run_state() == Monitor::RunState::Frozen) {
      st = stopped_event(stop_kind_name(mon.last_stop().kind), mon.last_stop().pc);
    } else if (mon.run_state() == Monitor::RunState::Shutdown) {
      st = stopped_event("halted", mon.machine().regs().pc);
    }
    return std::pair{state_json(), st};
  });
  {
    std::lock_guard lock(state_mu);
    latest = state;
  }
  s->send(state);
  if (!stopped.empty()) s->send(stopped);
}

void WsBridge::Impl::on_close(const std::shared_ptr<WsSession>& s) {
  sessions.erase(s);
  if (sessions.empty() && !stopping) {
    mon.call([&] { session.release(Controller::Console); });
  }
}

// Monitor thread only.
std::string WsBridge::Impl::state_json() {
  const CpuRegs& r = mon.machine().regs();
  json regs = json::object();
  for (unsigned i = 0; i < kRegisterCount; ++i) regs["r" + std::to_string(i)] = r.r[i];
  regs["pc"] = r.pc;
  regs["flags"] = r.flags;
  regs["mode"] = r.mode == CpuMode::User ? "user" : "supv";
  return dump({{"event", "state"}, {"regs", regs}});
}

void WsBridge::Impl::pump() {
  while (!stopping) {
    auto ev = events->wait_pop(std::chrono::milliseconds(20));
    if (!ev) continue;
    switch (ev->kind) {
      case MonitorEvent::Kind::Stopped:
      case MonitorEvent::Kind::Shutdown: {
        if (stopping) return;
        std::string state = mon.call([&] { return state_json(); });
        {
          std::lock_guard lock(state_mu);
          latest = state;
        }
        broadcast(ev->kind == MonitorEvent::Kind::Stopped
                      ? stopped_event(stop_kind_name(ev->stop.kind), ev->stop.pc)
                      : stopped_event("halted", ev->stop.pc));
        broadcast(std::move(state));
        break;
      }
      case MonitorEvent::Kind::Serial:
        broadcast(dump({{"event", "serial"}, {"data", ev->data}}));
        break;
      case MonitorEvent::Kind::Resumed:
        break;
    }
  }
}

std::vector<std::string> WsBridge::Impl::handle(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    return {error_event(std::string("malformed JSON: ") + e.what())};
  }
  if (!j.is_object() || !j.contains("cmd") || !j["cmd"].is_string()) {
    return {error_event("missing \"cmd\"")};
  }
  const std::string cmd = j["cmd"].get<std::string>();
  const auto addr = get_u32(j, "addr");

  const auto held = [&] {
    return error_event(std::string("run control is held by ") +
                       controller_name(*session.holder()));
  };
  const auto bp_list = [&] {
    return dump({{"event", "breakpoints"}, {"addrs", session.breakpoints()}});
  };

  if (cmd == "continue" || cmd == "step") {
    return mon.call([&]() -> std::vector<std::string> {
      if (!session.may_control(Controller::Console)) return {held()};
      if (!mon.frozen()) return {error_event("guest is not frozen")};
      if (cmd == "step") {
        session.step_guest();
      } else {
        session.continue_guest();
      }
      return {};
    });
  }
  if (cmd == "pause") {
    return mon.call([&]() -> std::vector<std::string> {
      if (!session.may_control(Controller::Console)) return {held()};
      if (mon.frozen()) {
        return {stopped_event(stop_kind_name(mon.last_stop().kind), mon.last_stop().pc)};
      }
      if (mon.run_state() == Monitor::RunState::Shutdown) return {error_event("guest has halted")};
      session.pause();
      return {};
    });
  }
  if (cmd == "reset") {
    return mon.call([&]() -> std::vector<std::string> {
      if (!session.may_control(Controller::Console)) return {held()};
      session.reset();
      return {};
    });
  }
  if (cmd == "setbp" || cmd == "clearbp") {
    if (!addr) return {error_event("missing or bad \"addr\"")};
    return mon.call([&]() -> std::vector<std::string> {
      if (!session.may_control(Controller::Console)) return {held()};
      if (cmd == "setbp") {
        switch (session.insert_breakpoint(*addr)) {
          case BpResult::Exists: return {error_event("exists")};
          case BpResult::BadAddress: return {error_event("bad address")};
          default: break;
        }
      } else if (session.remove_breakpoint(*addr) == BpResult::Missing) {
        return {error_event("no breakpoint at address")};
      }
      return {bp_list()};
    });
  }
  if (cmd == "readmem") {
    const auto len = get_u32(j, "len");
    if (!addr || !len) return {error_event("readmem needs \"addr\" and \"len\"")};
    if (*len > kMaxMem) return {error_event("len exceeds 4096")};
    auto bytes = mon.call([&] { return session.read_mem(*addr, *len); });
    if (!bytes) return {error_event("unmapped or monitor memory")};
    return {dump({{"event", "mem"}, {"addr", *addr}, {"bytes", rsp::to_hex(*bytes)}})};
  }
  if (cmd == "writemem") {
    auto it = j.find("bytes");
    if (!addr || it == j.end() || !it->is_string()) {
      return {error_event("writemem needs \"addr\" and \"bytes\"")};
    }
    const auto bytes = rsp::from_hex(it->get<std::string>());
    if (!bytes) return {error_event("\"bytes\" is not hex")};
    if (bytes->size() > kMaxMem) return {error_event("write exceeds 4096 bytes")};
    return mon.call([&]() -> std::vector<std::string> {
      if (!session.may_control(Controller::Console)) return {held()};
      if (!session.write_mem(*addr, *bytes)) return {error_event("unmapped or monitor memory")};
      const auto back = session.read_mem(*addr, bytes->size());
      return {dump({{"event", "mem"}, {"addr", *addr}, {"bytes", rsp::to_hex(*back)}})};
    });
  }
  if (cmd == "disasm") {
    const auto count = get_u32(j, "count");
    if (!addr || !count) return {error_event("disasm needs \"addr\" and \"count\"")};
    if (*count > kMaxDisasm) return {error_event("count exceeds 64")};
    return mon.call([&]() -> std::vector<std::string> {
      json lines = json::array();
      for (uint32_t i = 0; i < *count; ++i) {
        const uint32_t a = *addr + 4 * i;
        const auto b = session.read_mem(a, 4);
        if (!b) break;
        const uint32_t word = uint32_t{(*b)[0]} | uint32_t{(*b)[1]} << 8 |
                              uint32_t{(*b)[2]} << 16 | uint32_t{(*b)[3]} << 24;
        lines.push_back({{"addr", a}, {"text", disassemble(a, word)}});
      }
      if (lines.empty() && *count) return {error_event("unmapped or monitor memory")};
      return {dump({{"event", "disasm"}, {"lines", lines}})};
    });
  }
  return {error_event("unknown command \"" + cmd + "\"")};
}

WsBridge::WsBridge(DebugSession& session, uint16_t port, const std::string& bind_addr)
    : impl_(std::make_unique<Impl>(session, port, bind_addr)) {}

WsBridge::~WsBridge() { stop(); }

uint16_t WsBridge::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsBridge::start() {
  if (impl_->io_thread.joinable()) return;
  impl_->stopping = false;
  impl_->events = impl_->mon.subscribe();
  {
    std::lock_guard lock(impl_->state_mu);
    impl_->latest = impl_->mon.call([&] { return impl_->state_json(); });
  }
  impl_->do_accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  impl_->pump_thread = std::thread([this] { impl_->pump(); });
}

void WsBridge::stop() {
  if (!impl_->io_thread.joinable()) return;
  impl_->stopping = true;
  impl_->pump_thread.join();
  std::promise<void> closed;
  net::post(impl_->ioc, [this, &closed] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    for (const auto& s : std::set(impl_->sessions)) s->close();
    closed.set_value();
  });
  closed.get_future().wait();
  impl_->ioc.stop();
  impl_->io_thread.join();
  impl_->mon.unsubscribe(impl_->events);
  impl_->mon.call([&] { impl_->session.release(Controller::Console); });
}

std::vector<std::string> WsBridge::handle_message(const std::string& text) {
  return impl_->handle(text);
}

std::string WsBridge::state_json() {
  return impl_->mon.call([&] { return impl_->state_json(); });
}

}  // namespace minipc
