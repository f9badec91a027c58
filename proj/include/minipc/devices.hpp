#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace minipc {

inline constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();
inline constexpr uint32_t kSectorBytes = 512;

enum class DeviceId : uint8_t { Uart0, Timer, Pic, Disk0, Disk1, Disk2, Nic };
inline constexpr std::array<DeviceId, 7> kAllDevices = {
    DeviceId::Uart0, DeviceId::Timer, DeviceId::Pic, DeviceId::Disk0,
    DeviceId::Disk1, DeviceId::Disk2, DeviceId::Nic};

struct PortRange {
  uint16_t first;
  uint16_t last;  // inclusive
  bool contains(uint16_t p) const { return p >= first && p <= last; }
};

PortRange port_range(DeviceId id);
std::optional<DeviceId> device_at_port(uint16_t port);
const char* device_name(DeviceId id);

namespace port {
inline constexpr uint16_t kUartTx = 0x00;
inline constexpr uint16_t kUartRx = 0x01;
inline constexpr uint16_t kUartStatus = 0x02;
inline constexpr uint16_t kTimerInterval = 0x10;
inline constexpr uint16_t kTimerControl = 0x11;
inline constexpr uint16_t kTimerCount = 0x12;
inline constexpr uint16_t kPicMask = 0x20;
inline constexpr uint16_t kPicAck = 0x21;
inline constexpr uint16_t kDisk0 = 0x40;
inline constexpr uint16_t kDisk1 = 0x50;
inline constexpr uint16_t kDisk2 = 0x60;
inline constexpr uint16_t kNic = 0x80;
// Register offsets within a disk / NIC block.
inline constexpr uint16_t kDiskLba = 0, kDiskCount = 1, kDiskAddr = 2,
                          kDiskCommand = 3, kDiskStatus = 4;
inline constexpr uint16_t kNicAddr = 0, kNicLen = 1, kNicCommand = 2,
                          kNicStatus = 3;
}  // namespace port

// Status bits shared by the disk and NIC.
namespace status {
inline constexpr uint32_t kBusy = 1u << 0;
inline constexpr uint32_t kDone = 1u << 1;
inline constexpr uint32_t kError = 1u << 2;
}  // namespace status

// PIC input lines; a line's vector is 8 + line.
inline constexpr unsigned kLineTimer = 0, kLineDisk = 1, kLineNic = 2, kLineUart = 3;
inline constexpr unsigned kFirstIrqVector = 8;

/// Physical memory as seen by bus-mastering devices. Returns false when the
/// transfer is refused (out of range or monitor-owned).
class DmaBus {
 public:
  virtual ~DmaBus() = default;
  virtual bool dma_write(uint32_t paddr, std::span<const uint8_t> bytes) = 0;
  virtual bool dma_read(uint32_t paddr, std::span<uint8_t> out) = 0;
};

class Uart {
 public:
  uint32_t read_reg(unsigned offset);
  void write_reg(unsigned offset, uint32_t value);
  bool irq() const { return !rx_.empty(); }

  void push_rx(uint8_t byte) { rx_.push_back(byte); }
  const std::string& output() const { return tx_; }
  std::string take_output();

 private:
  std::string tx_;
  std::deque<uint8_t> rx_;
};

/// Periodic interval timer. The count register holds unconsumed expirations;
/// a read returns the current count and consumes one of them. The line is
/// asserted while the count is nonzero, so no tick is ever dropped.
class Timer {
 public:
  uint32_t read_reg(unsigned offset, uint64_t now);
  void write_reg(unsigned offset, uint32_t value, uint64_t now);
  void tick(uint64_t now);
  uint64_t next_event() const { return enabled_ && interval_ ? next_expiry_ : kNever; }
  bool irq() const { return count_ != 0; }
  /// Cycle at which the timer was last switched on, or kNever.
  uint64_t started_at() const { return started_at_; }

 private:
  uint64_t started_at_ = kNever;
  uint32_t interval_ = 0;
  bool enabled_ = false;
  uint64_t next_expiry_ = kNever;
  uint32_t count_ = 0;
};

/// Mask bit set = line masked. Writing a vector number to the ack register
/// ends its in-service period.
class Pic {
 public:
  uint32_t read_reg(unsigned offset) const;
  void write_reg(unsigned offset, uint32_t value);

  uint8_t mask() const { return mask_; }
  uint8_t in_service() const { return in_service_; }
  void mark_in_service(unsigned line) { in_service_ |= static_cast<uint8_t>(1u << line); }
  /// Highest-priority (lowest) line that is raised, unmasked, and not in service.
  std::optional<unsigned> select(uint8_t raised) const;

 private:
  uint8_t mask_ = 0xFF;
  uint8_t in_service_ = 0;
};

class Disk {
 public:
  uint32_t read_reg(unsigned offset) const;
  void write_reg(unsigned offset, uint32_t value, uint64_t now, DmaBus& bus);
  void tick(uint64_t now, DmaBus& bus);
  uint64_t next_event() const { return busy() ? complete_at_ : kNever; }
  bool irq() const { return (status_ & (status::kDone | status::kError)) != 0; }
  bool busy() const { return (status_ & status::kBusy) != 0; }

  void set_backing(std::vector<uint8_t> bytes) { backing_ = std::move(bytes); }
  const std::vector<uint8_t>& backing() const { return backing_; }
  void set_cycles_per_byte(uint64_t c) { cycles_per_byte_ = c; }

  /// Bytes the current register contents would transfer, or nullopt when the
  /// request is out of range.
  std::optional<std::span<const uint8_t>> request_span() const;
  /// Starts a READ whose data the caller has already placed in memory.
  void start_read_without_dma(uint64_t now);

  uint32_t lba() const { return lba_; }
  uint32_t count() const { return count_; }
  uint32_t dma_addr() const { return addr_; }

 private:
  void start(uint64_t now, bool with_dma);

  std::vector<uint8_t> backing_;
  uint64_t cycles_per_byte_ = 0;
  uint32_t lba_ = 0, count_ = 0, addr_ = 0, status_ = 0;
  uint64_t complete_at_ = kNever;
  bool dma_pending_ = false;
};

class Nic {
 public:
  uint32_t read_reg(unsigned offset) const;
  void write_reg(unsigned offset, uint32_t value, uint64_t now);
  void tick(uint64_t now, DmaBus& bus);
  uint64_t next_event() const { return busy() ? complete_at_ : kNever; }
  bool irq() const { return (status_ & (status::kDone | status::kError)) != 0; }
  bool busy() const { return (status_ & status::kBusy) != 0; }

  void set_cycles_per_byte(uint64_t c) { cycles_per_byte_ = c; }
  /// Starts a SEND whose frame bytes the caller already fetched.
  void start_send_with_frame(std::vector<uint8_t> frame, uint64_t now);

  uint32_t tx_addr() const { return addr_; }
  uint32_t tx_len() const { return len_; }
  const std::vector<std::vector<uint8_t>>& tx_log() const { return log_; }

 private:
  uint64_t cycles_per_byte_ = 0;
  uint32_t addr_ = 0, len_ = 0, status_ = 0;
  uint64_t complete_at_ = kNever;
  std::optional<std::vector<uint8_t>> prefetched_;
  std::vector<std::vector<uint8_t>> log_;
};

}  // namespace minipc
