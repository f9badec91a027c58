#include "minipc/workload.hpp"

#include <map>
#include <stdexcept>

#include "minipc/assembler.hpp"
#include "minipc/guest_programs.hpp"

namespace minipc::workload {

uint8_t pattern_byte(unsigned disk, uint32_t index) {
  const uint32_t x = (index + disk * 0x01000000u) * 2654435761u;
  return static_cast<uint8_t>(x >> 24);
}

std::vector<uint8_t> disk_pattern(unsigned disk, size_t bytes) {
  std::vector<uint8_t> out(bytes);
  for (size_t i = 0; i < bytes; ++i) out[i] = pattern_byte(disk, static_cast<uint32_t>(i));
  return out;
}

namespace {

// Calls f(disk, disk_offset, length) for every chunk in transfer order.
template <typename F>
void for_each_chunk(const XferParams& p, F f) {
  std::array<size_t, kDiskCount> offset{};
  unsigned disk = 0;
  uint32_t remain = p.total_bytes;
  while (remain > 0) {
    uint32_t seg_left = std::min(remain, p.segment_bytes);
    remain -= seg_left;
    while (seg_left > 0) {
      const uint32_t n = std::min(seg_left, p.chunk_bytes);
      f(disk, offset[disk], n);
      offset[disk] += n;
      disk = (disk + 1) % kDiskCount;
      seg_left -= n;
    }
  }
}

const Image& cached(const char* name) {
  static std::map<std::string, Image> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const auto text = guest::source(name);
    if (text.empty()) throw std::runtime_error(std::string("no embedded guest program ") + name);
    it = cache.emplace(name, assemble(text)).first;
  }
  return it->second;
}

}  // namespace

size_t disk_bytes_needed(const XferParams& p) {
  std::array<size_t, kDiskCount> used{};
  for_each_chunk(p, [&](unsigned d, size_t off, uint32_t n) { used[d] = off + n; });
  size_t most = 0;
  for (size_t u : used) most = std::max(most, u);
  return most;
}

std::vector<uint8_t> expected_stream(const XferParams& p,
                                     const std::array<std::vector<uint8_t>, kDiskCount>& disks) {
  std::vector<uint8_t> out;
  out.reserve(p.total_bytes);
  for_each_chunk(p, [&](unsigned d, size_t off, uint32_t n) {
    const auto& src = disks[d];
    if (off + n > src.size()) throw std::out_of_range("disk backing too small");
    out.insert(out.end(), src.begin() + static_cast<ptrdiff_t>(off),
               src.begin() + static_cast<ptrdiff_t>(off + n));
  });
  return out;
}

const Image& kernel_image() { return cached("kernel"); }
const Image& xfer_image() { return cached("xfer"); }
const Image& crash_image() { return cached("crash"); }

void seed_disks(Machine& m, const XferParams& p) {
  const size_t bytes = disk_bytes_needed(p);
  // Whole sectors, plus one spare so reads never touch the exact end.
  const size_t sized = (bytes / kSectorBytes + 1) * kSectorBytes;
  for (unsigned d = 0; d < kDiskCount; ++d) m.disk(d).set_backing(disk_pattern(d, sized));
}

void poke_params(Machine& m, const XferParams& p) {
  m.write_phys32(kParamBytesPerTick, p.bytes_per_tick);
  m.write_phys32(kParamTotal, p.total_bytes);
  m.write_phys32(kParamSegment, p.segment_bytes);
  m.write_phys32(kParamTick, p.tick_cycles);
  m.write_phys32(kParamChunk, p.chunk_bytes);
  m.write_phys32(kParamMemTop, p.mem_top);
}

void boot(Machine& m, const Image& app, const XferParams& p) {
  m.load_image(app);
  m.load_image(kernel_image());
  poke_params(m, p);
}

Reassembly reassemble(const std::vector<std::vector<uint8_t>>& tx_log) {
  Reassembly r;
  std::map<uint16_t, const std::vector<uint8_t>*> by_seq;
  for (const auto& frame : tx_log) {
    if (frame.size() < kDatagramHeader || frame[0] != 'U' || frame[1] != 'D') {
      r.error = "bad datagram header";
      return r;
    }
    const uint16_t seq = static_cast<uint16_t>(frame[2] | frame[3] << 8);
    const uint32_t len = uint32_t{frame[4]} | uint32_t{frame[5]} << 8 |
                         uint32_t{frame[6]} << 16 | uint32_t{frame[7]} << 24;
    if (len != frame.size() - kDatagramHeader) {
      r.error = "datagram " + std::to_string(seq) + " length field " + std::to_string(len) +
                " disagrees with frame size " + std::to_string(frame.size());
      return r;
    }
    if (!by_seq.emplace(seq, &frame).second) {
      r.error = "duplicate sequence number " + std::to_string(seq);
      return r;
    }
  }
  uint32_t expect = 0;
  for (const auto& [seq, frame] : by_seq) {
    if (seq != expect) {
      r.error = "missing sequence number " + std::to_string(expect);
      return r;
    }
    ++expect;
    r.data.insert(r.data.end(), frame->begin() + kDatagramHeader, frame->end());
  }
  r.segments = by_seq.size();
  r.ok = true;
  return r;
}

Reassembly verify_transfer(const Machine& m, const XferParams& p) {
  Reassembly r = reassemble(m.nic().tx_log());
  if (!r.ok) return r;
  std::array<std::vector<uint8_t>, kDiskCount> disks;
  for (unsigned d = 0; d < kDiskCount; ++d) disks[d] = m.disk(d).backing();
  std::vector<uint8_t> want;
  try {
    want = expected_stream(p, disks);
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    return r;
  }
  const size_t want_segments = (p.total_bytes + p.segment_bytes - 1) / p.segment_bytes;
  if (r.segments != want_segments) {
    r.ok = false;
    r.error = "expected " + std::to_string(want_segments) + " segments, got " +
              std::to_string(r.segments);
  } else if (r.data != want) {
    r.ok = false;
    size_t i = 0;
    while (i < r.data.size() && i < want.size() && r.data[i] == want[i]) ++i;
    r.error = "payload differs from disk data at byte " + std::to_string(i) + " (got " +
              std::to_string(r.data.size()) + " bytes, want " + std::to_string(want.size()) + ")";
  }
  return r;
}

}  // namespace minipc::workload
