#include "connseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "connseg/errors.hpp"

namespace connseg {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(std::string("checkpoint truncated while reading ") + what);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in, const char* what) {
  const uint32_t bits = read_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write("CNW1", 4);
  write_u32(out, (uint32_t)tensors.size());
  for (const auto& t : tensors) {
    write_u32(out, (uint32_t)t.name.size());
    out.write(t.name.data(), (std::streamsize)t.name.size());
    write_u32(out, (uint32_t)t.shape.size());
    uint64_t count = 1;
    for (uint32_t d : t.shape) {
      write_u32(out, d);
      count *= d;
    }
    if (count != t.values.size()) {
      throw DataError("checkpoint tensor '" + t.name + "': shape/value mismatch");
    }
    for (float v : t.values) write_f32(out, v);
  }
  if (!out) throw DataError("write failure on checkpoint: " + path.string());
}

std::vector<CheckpointTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CNW1", 4) != 0) {
    throw DataError("not a CNW1 checkpoint: " + path.string());
  }
  const uint32_t count = read_u32(in, "tensor count");
  std::vector<CheckpointTensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const uint32_t name_len = read_u32(in, "name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (!in) throw DataError("checkpoint truncated while reading tensor name");
    const uint32_t rank = read_u32(in, "rank");
    uint64_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t d = read_u32(in, "shape dim");
      t.shape.push_back(d);
      n *= d;
    }
    t.values.resize(n);
    for (uint64_t e = 0; e < n; ++e) t.values[(size_t)e] = read_f32(in, "tensor values");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace connseg
