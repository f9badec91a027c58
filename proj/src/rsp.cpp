#include "minipc/rsp.hpp"

namespace minipc::rsp {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

bool needs_escape(char c) { return c == '$' || c == '#' || c == '}' || c == '*'; }

}  // namespace

uint8_t checksum(std::string_view bytes) {
  uint8_t sum = 0;
  for (char c : bytes) sum = static_cast<uint8_t>(sum + static_cast<uint8_t>(c));
  return sum;
}

std::string frame(std::string_view payload) {
  std::string body;
  body.reserve(payload.size() + 8);
  for (char c : payload) {
    if (needs_escape(c)) {
      body.push_back('}');
      body.push_back(static_cast<char>(c ^ 0x20));
    } else {
      body.push_back(c);
    }
  }
  const uint8_t sum = checksum(body);
  std::string out;
  out.reserve(body.size() + 4);
  out.push_back('$');
  out += body;
  out.push_back('#');
  out.push_back(kHexDigits[sum >> 4]);
  out.push_back(kHexDigits[sum & 0xF]);
  return out;
}

std::optional<std::string> unescape(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '}') {
      if (++i == raw.size()) return std::nullopt;
      out.push_back(static_cast<char>(raw[i] ^ 0x20));
    } else {
      out.push_back(raw[i]);
    }
  }
  return out;
}

void Parser::feed(std::string_view bytes) {
  for (char c : bytes) push(c);
}

void Parser::push(char c) {
  switch (state_) {
    case State::Idle:
      if (c == '$') {
        raw_.clear();
        state_ = State::Body;
      } else if (c == '+' || c == '-') {
        ready_.push_back(Ack{c == '+'});
      } else if (c == '\x03') {
        ready_.push_back(Interrupt{});
      }
      return;
    case State::Body:
      if (c == '#') {
        state_ = State::Sum1;
      } else {
        raw_.push_back(c);
      }
      return;
    case State::Sum1: {
      const int v = hex_value(c);
      // The wire format uses lowercase digits; uppercase is accepted too.
      sum_bad_ = v < 0;
      sum_hi_ = static_cast<uint8_t>(v < 0 ? 0 : v);
      state_ = State::Sum2;
      return;
    }
    case State::Sum2: {
      const int v = hex_value(c);
      state_ = State::Idle;
      const bool ok = !sum_bad_ && v >= 0 &&
                      static_cast<uint8_t>(sum_hi_ << 4 | v) == checksum(raw_);
      auto payload = ok ? unescape(raw_) : std::nullopt;
      if (payload) {
        ready_.push_back(Packet{std::move(*payload)});
      } else {
        ready_.push_back(BadChecksum{});
      }
      raw_.clear();
      return;
    }
  }
}

std::optional<Event> Parser::next() {
  if (ready_.empty()) return std::nullopt;
  Event e = std::move(ready_.front());
  ready_.pop_front();
  return e;
}

std::string to_hex(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0xF]);
  }
  return out;
}

std::optional<std::vector<uint8_t>> from_hex(std::string_view hex) {
  if (hex.size() % 2) return std::nullopt;
  std::vector<uint8_t> out(hex.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return out;
}

std::optional<uint32_t> parse_hex_u32(std::string_view hex) {
  if (hex.empty() || hex.size() > 8) return std::nullopt;
  uint32_t v = 0;
  for (char c : hex) {
    const int d = hex_value(c);
    if (d < 0) return std::nullopt;
    v = v << 4 | static_cast<uint32_t>(d);
  }
  return v;
}

}  // namespace minipc::rsp
