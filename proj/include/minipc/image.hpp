#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace minipc {

struct Section {
  uint32_t load_paddr = 0;
  std::vector<uint8_t> bytes;

  friend bool operator==(const Section&, const Section&) = default;
};

/// Loadable guest program. Serializes to the MPC1 container:
///   "MPC1" | u32 entry | u32 section_count | { u32 paddr | u32 len | bytes }*
/// All integers little-endian.
struct Image {
  uint32_t entry = 0;
  std::vector<Section> sections;

  friend bool operator==(const Image&, const Image&) = default;
};

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<uint8_t> serialize_image(const Image& image);
Image parse_image(std::span<const uint8_t> bytes);

void write_image_file(const Image& image, const std::filesystem::path& path);
Image read_image_file(const std::filesystem::path& path);

/// True when no two sections share a byte.
bool sections_disjoint(const Image& image);

}  // namespace minipc
