#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace minipc::rsp {

/// Sum of bytes mod 256.
uint8_t checksum(std::string_view bytes);

/// `$payload#cc`. Bytes `$ # } *` in the payload are sent as `}` followed by
/// the byte xor 0x20, so any byte string survives the round trip; the
/// checksum covers the bytes as sent.
std::string frame(std::string_view payload);

struct Packet {
  std::string payload;
  friend bool operator==(const Packet&, const Packet&) = default;
};
struct BadChecksum {
  friend bool operator==(const BadChecksum&, const BadChecksum&) = default;
};
struct Ack {
  bool positive = true;
  friend bool operator==(const Ack&, const Ack&) = default;
};
/// A bare 0x03 outside a packet.
struct Interrupt {
  friend bool operator==(const Interrupt&, const Interrupt&) = default;
};
using Event = std::variant<Packet, BadChecksum, Ack, Interrupt>;

/// Incremental parser over arbitrarily chunked input. Bytes between packets
/// other than `+`, `-` and 0x03 are ignored.
class Parser {
 public:
  void feed(std::string_view bytes);
  /// Next complete event, or nullopt when more input is needed.
  std::optional<Event> next();
  bool mid_packet() const { return state_ != State::Idle; }

 private:
  enum class State { Idle, Body, Sum1, Sum2 };
  void push(char c);

  State state_ = State::Idle;
  std::string raw_;
  uint8_t sum_hi_ = 0;
  bool sum_bad_ = false;
  std::deque<Event> ready_;
};

/// Undo `}` escaping. nullopt on a dangling escape.
std::optional<std::string> unescape(std::string_view raw);

std::string to_hex(std::span<const uint8_t> bytes);
/// Strict even-length hex, either case. nullopt on anything else.
std::optional<std::vector<uint8_t>> from_hex(std::string_view hex);
/// Unsigned hex number as used in `m`/`M`/`Z` arguments (no prefix).
std::optional<uint32_t> parse_hex_u32(std::string_view hex);

}  // namespace minipc::rsp
