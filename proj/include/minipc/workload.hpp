#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "minipc/image.hpp"
#include "minipc/machine.hpp"

namespace minipc::workload {

// Boot parameter block poked by the harness before the guest starts.
inline constexpr uint32_t kParamBase = 0x0F00;
inline constexpr uint32_t kParamBytesPerTick = kParamBase + 0;
inline constexpr uint32_t kParamTotal = kParamBase + 4;
inline constexpr uint32_t kParamSegment = kParamBase + 8;
inline constexpr uint32_t kParamTick = kParamBase + 12;
inline constexpr uint32_t kParamChunk = kParamBase + 16;
inline constexpr uint32_t kParamMemTop = kParamBase + 20;
inline constexpr uint32_t kXferError = kParamBase + 0xB0;

inline constexpr uint32_t kFaultVaddr = 0x0F40;
inline constexpr uint32_t kFaultVector = 0x0F44;
inline constexpr uint32_t kNoFault = 0xFFFFFFFFu;

inline constexpr uint32_t kSegmentBuffer = 0x100000;
inline constexpr uint32_t kDatagramHeader = 8;
inline constexpr unsigned kDiskCount = 3;

struct XferParams {
  uint32_t bytes_per_tick = 8192;
  uint32_t total_bytes = 2u << 20;
  uint32_t segment_bytes = 1u << 20;
  uint32_t tick_cycles = 65'536;
  uint32_t chunk_bytes = 4096;
  uint32_t mem_top = 16u << 20;
};

/// Deterministic disk contents: the top byte of (i + disk * 2^24) * 2654435761.
uint8_t pattern_byte(unsigned disk, uint32_t index);
std::vector<uint8_t> disk_pattern(unsigned disk, size_t bytes);

/// Bytes each disk must hold for a transfer of `p`.
size_t disk_bytes_needed(const XferParams& p);
/// The payload stream xfer.masm should emit, built from the disks directly.
std::vector<uint8_t> expected_stream(const XferParams& p,
                                     const std::array<std::vector<uint8_t>, kDiskCount>& disks);

/// Cached assembled images of the shipped guest programs.
const Image& kernel_image();
const Image& xfer_image();
const Image& crash_image();

void seed_disks(Machine& m, const XferParams& p);
void poke_params(Machine& m, const XferParams& p);
/// Loads `app`, then the kernel (whose entry becomes the pc), then pokes the
/// parameter block. Disks are left alone.
void boot(Machine& m, const Image& app, const XferParams& p);

struct Reassembly {
  bool ok = false;
  size_t segments = 0;
  std::vector<uint8_t> data;
  std::string error;
};

/// Parses a NIC transmit log into the payload stream, ordered by sequence
/// number. Fails on bad framing, duplicate or missing sequence numbers.
Reassembly reassemble(const std::vector<std::vector<uint8_t>>& tx_log);

/// Reassembly plus a bit-exact comparison against the disks.
Reassembly verify_transfer(const Machine& m, const XferParams& p);

}  // namespace minipc::workload
