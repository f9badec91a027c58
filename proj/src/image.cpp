#include "minipc/image.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace minipc {

namespace {

constexpr uint8_t kMagic[4] = {0x4D, 0x50, 0x43, 0x31};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const uint8_t> take(size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw ImageFormatError("truncated MPC1 image");
  }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_image(const Image& image) {
  std::vector<uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, image.entry);
  put_u32(out, static_cast<uint32_t>(image.sections.size()));
  for (const auto& s : image.sections) {
    put_u32(out, s.load_paddr);
    put_u32(out, static_cast<uint32_t>(s.bytes.size()));
    out.insert(out.end(), s.bytes.begin(), s.bytes.end());
  }
  return out;
}

Image parse_image(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ImageFormatError("bad magic (expected MPC1)");
  }
  Image image;
  image.entry = r.u32();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    Section s;
    s.load_paddr = r.u32();
    const uint32_t len = r.u32();
    auto body = r.take(len);
    s.bytes.assign(body.begin(), body.end());
    image.sections.push_back(std::move(s));
  }
  if (!r.at_end()) throw ImageFormatError("trailing bytes after last section");
  return image;
}

void write_image_file(const Image& image, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  auto bytes = serialize_image(image);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Image read_image_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return parse_image(bytes);
}

bool sections_disjoint(const Image& image) {
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const auto& s : image.sections) {
    if (!s.bytes.empty()) spans.emplace_back(s.load_paddr, s.load_paddr + s.bytes.size());
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) return false;
  }
  return true;
}

}  // namespace minipc
