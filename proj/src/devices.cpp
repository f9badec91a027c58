#include "minipc/devices.hpp"

#include <algorithm>

namespace minipc {

PortRange port_range(DeviceId id) {
  switch (id) {
    case DeviceId::Uart0: return {0x00, 0x02};
    case DeviceId::Timer: return {0x10, 0x12};
    case DeviceId::Pic: return {0x20, 0x21};
    case DeviceId::Disk0: return {0x40, 0x44};
    case DeviceId::Disk1: return {0x50, 0x54};
    case DeviceId::Disk2: return {0x60, 0x64};
    case DeviceId::Nic: return {0x80, 0x83};
  }
  return {1, 0};
}

std::optional<DeviceId> device_at_port(uint16_t p) {
  for (DeviceId id : kAllDevices) {
    if (port_range(id).contains(p)) return id;
  }
  return std::nullopt;
}

const char* device_name(DeviceId id) {
  switch (id) {
    case DeviceId::Uart0: return "uart0";
    case DeviceId::Timer: return "timer";
    case DeviceId::Pic: return "pic";
    case DeviceId::Disk0: return "disk0";
    case DeviceId::Disk1: return "disk1";
    case DeviceId::Disk2: return "disk2";
    case DeviceId::Nic: return "nic";
  }
  return "?";
}

// ---- UART -----------------------------------------------------------------

uint32_t Uart::read_reg(unsigned offset) {
  switch (offset) {
    case 1: {
      if (rx_.empty()) return 0;
      uint8_t b = rx_.front();
      rx_.pop_front();
      return b;
    }
    case 2: return (rx_.empty() ? 0u : 1u) | 2u;
    default: return 0;
  }
}

void Uart::write_reg(unsigned offset, uint32_t value) {
  if (offset == 0) tx_.push_back(static_cast<char>(value & 0xFF));
}

std::string Uart::take_output() {
  std::string out;
  out.swap(tx_);
  return out;
}

// ---- Timer ----------------------------------------------------------------

uint32_t Timer::read_reg(unsigned offset, uint64_t now) {
  tick(now);
  switch (offset) {
    case 0: return interval_;
    case 1: return enabled_ ? 1u : 0u;
    case 2: {
      const uint32_t c = count_;
      if (count_) --count_;
      return c;
    }
    default: return 0;
  }
}

void Timer::write_reg(unsigned offset, uint32_t value, uint64_t now) {
  tick(now);
  switch (offset) {
    case 0:
      interval_ = value;
      break;
    case 1:
      if ((value & 1u) && !enabled_) started_at_ = now;
      enabled_ = (value & 1u) != 0;
      break;
    default:
      return;
  }
  next_expiry_ = (enabled_ && interval_) ? now + interval_ : kNever;
}

void Timer::tick(uint64_t now) {
  if (!enabled_ || interval_ == 0 || now < next_expiry_) return;
  const uint64_t n = (now - next_expiry_) / interval_ + 1;
  count_ += static_cast<uint32_t>(n);
  next_expiry_ += n * interval_;
}

// ---- PIC ------------------------------------------------------------------

uint32_t Pic::read_reg(unsigned offset) const {
  return offset == 0 ? mask_ : in_service_;
}

void Pic::write_reg(unsigned offset, uint32_t value) {
  if (offset == 0) {
    mask_ = static_cast<uint8_t>(value);
  } else if (value >= kFirstIrqVector && value < kFirstIrqVector + 8) {
    in_service_ &= static_cast<uint8_t>(~(1u << (value - kFirstIrqVector)));
  }
}

std::optional<unsigned> Pic::select(uint8_t raised) const {
  const uint8_t ready = raised & static_cast<uint8_t>(~mask_) & static_cast<uint8_t>(~in_service_);
  if (ready == 0) return std::nullopt;
  for (unsigned line = 0; line < 8; ++line) {
    if (ready & (1u << line)) return line;
  }
  return std::nullopt;
}

// ---- Disk -----------------------------------------------------------------

uint32_t Disk::read_reg(unsigned offset) const {
  switch (offset) {
    case port::kDiskLba: return lba_;
    case port::kDiskCount: return count_;
    case port::kDiskAddr: return addr_;
    case port::kDiskStatus: return status_;
    default: return 0;
  }
}

void Disk::write_reg(unsigned offset, uint32_t value, uint64_t now, DmaBus& bus) {
  (void)bus;
  switch (offset) {
    case port::kDiskLba: lba_ = value; break;
    case port::kDiskCount: count_ = value; break;
    case port::kDiskAddr: addr_ = value; break;
    case port::kDiskCommand:
      if (value == 1) start(now, true);
      break;
    case port::kDiskStatus:
      // Any write acknowledges completion.
      status_ &= status::kBusy;
      break;
    default: break;
  }
}

std::optional<std::span<const uint8_t>> Disk::request_span() const {
  const uint64_t offset = uint64_t{lba_} * kSectorBytes;
  const uint64_t bytes = uint64_t{count_} * kSectorBytes;
  if (offset + bytes > backing_.size()) return std::nullopt;
  return std::span<const uint8_t>(backing_).subspan(offset, bytes);
}

void Disk::start(uint64_t now, bool with_dma) {
  if (busy() || !request_span()) {
    status_ = (status_ & status::kBusy) | status::kError;
    return;
  }
  status_ = status::kBusy;
  dma_pending_ = with_dma;
  complete_at_ = now + uint64_t{count_} * kSectorBytes * cycles_per_byte_;
}

void Disk::start_read_without_dma(uint64_t now) { start(now, false); }

void Disk::tick(uint64_t now, DmaBus& bus) {
  if (!busy() || now < complete_at_) return;
  uint32_t result = status::kDone;
  if (dma_pending_) {
    auto span = request_span();
    if (!span || !bus.dma_write(addr_, *span)) result |= status::kError;
  }
  status_ = result;
  complete_at_ = kNever;
  dma_pending_ = false;
}

// ---- NIC ------------------------------------------------------------------

uint32_t Nic::read_reg(unsigned offset) const {
  switch (offset) {
    case port::kNicAddr: return addr_;
    case port::kNicLen: return len_;
    case port::kNicStatus: return status_;
    default: return 0;
  }
}

void Nic::write_reg(unsigned offset, uint32_t value, uint64_t now) {
  switch (offset) {
    case port::kNicAddr: addr_ = value; break;
    case port::kNicLen: len_ = value; break;
    case port::kNicCommand:
      if (value != 1) break;
      if (busy()) {
        status_ |= status::kError;
        break;
      }
      status_ = status::kBusy;
      prefetched_.reset();
      complete_at_ = now + uint64_t{len_} * cycles_per_byte_;
      break;
    case port::kNicStatus:
      status_ &= status::kBusy;
      break;
    default: break;
  }
}

void Nic::start_send_with_frame(std::vector<uint8_t> frame, uint64_t now) {
  if (busy()) {
    status_ |= status::kError;
    return;
  }
  len_ = static_cast<uint32_t>(frame.size());
  status_ = status::kBusy;
  prefetched_ = std::move(frame);
  complete_at_ = now + uint64_t{len_} * cycles_per_byte_;
}

void Nic::tick(uint64_t now, DmaBus& bus) {
  if (!busy() || now < complete_at_) return;
  uint32_t result = status::kDone;
  if (prefetched_) {
    log_.push_back(std::move(*prefetched_));
  } else {
    std::vector<uint8_t> frame(len_);
    if (bus.dma_read(addr_, frame)) {
      log_.push_back(std::move(frame));
    } else {
      result |= status::kError;
    }
  }
  prefetched_.reset();
  status_ = result;
  complete_at_ = kNever;
}

}  // namespace minipc
