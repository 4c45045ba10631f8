#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "connseg/codec.hpp"
#include "connseg/grid.hpp"
#include "connseg/image.hpp"
#include "connseg/train.hpp"

namespace connseg {

// ---- PNG ----

/// 8-bit grayscale or RGB PNG; pixel salient iff luma > 127 (BT.601 for RGB).
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);
/// RGB image scaled to [0,1] (grayscale files are replicated to 3 channels).
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);
/// Continuous saliency map in [0,1] from an 8-bit grayscale PNG.
std::vector<float> load_gray_map(const std::filesystem::path& path, int* height, int* width);

// ---- manifests ----

struct ManifestRecord {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::filesystem::path instances_dir;  // empty when absent
};

/// CSV `image,mask[,instances_dir]`, one record per line, '#' comments.
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;
};

Manifest load_manifest(const std::filesystem::path& path);
/// All referenced files exist, decode, and image/mask dimensions match;
/// errors identify the offending record.
void validate_manifest(const Manifest& manifest);
std::vector<Sample> load_samples(const Manifest& manifest);

// ---- synthetic data ----

struct SyntheticSpec {
  int count = 20;
  int image_size = 64;
  int shapes_min = 1;
  int shapes_max = 3;
  std::vector<std::string> kinds = {"rectangle", "ellipse", "ring"};
  double contrast_min = 0.3;
  double contrast_max = 0.6;
  double noise = 0.03;
  uint64_t seed = 1;

  void validate() const;
};

std::string synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const std::string& json_text);
SyntheticSpec load_synthetic_spec_file(const std::filesystem::path& path);

/// Writes images/, masks/, instances/ and manifest.csv under out_dir.
/// Deterministic per seed; every mask is free of isolated salient pixels and
/// its salient fraction lies in [0.02, 0.6].
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// ---- connectivity cube cache ----

// CCUB layout: magic "CCUB" | version u8=1 | pattern u8 (0=N4,1=N8,2=N12) |
// H,W u32 LE | binary flag u8 | payload. Binary payload packs channel-minor
// bits LSB-first, padded to a whole byte per image row; float payload is raw
// little-endian f32.
void write_cube(const std::filesystem::path& path, const ConnectivityCube& cube);
ConnectivityCube read_cube(const std::filesystem::path& path);

}  // namespace connseg
