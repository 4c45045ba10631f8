#include "connseg/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "connseg/errors.hpp"

namespace connseg {

using nlohmann::json;

// ------------------------------------------------------------------ PNG ----

namespace {

struct PngError {
  std::string message;
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  if (err) err->message = msg ? msg : "unknown libpng error";
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct RawPng {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;
};

RawPng read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw DataError("cannot open PNG: " + path.string());

  PngError err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("libpng initialization failed");
  }

  RawPng out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("PNG decode error in " + path.string() + ": " + err.message);
  }

  png_init_io(png, fp);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("unsupported bit depth (16) in " + path.string());
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out.height = (int)png_get_image_height(png, info);
  out.width = (int)png_get_image_width(png, info);
  out.channels = (int)png_get_channels(png, info);
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("unsupported channel layout in " + path.string());
  }

  out.pixels.resize((size_t)out.height * out.width * out.channels);
  rows.resize((size_t)out.height);
  for (int i = 0; i < out.height; ++i) {
    rows[(size_t)i] = out.pixels.data() + (size_t)i * out.width * out.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

void write_png(const std::filesystem::path& path, const uint8_t* pixels, int height, int width,
               int channels) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw DataError("cannot open PNG for writing: " + path.string());

  PngError err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("libpng initialization failed");
  }

  std::vector<png_bytep> rows((size_t)height);
  for (int i = 0; i < height; ++i) {
    rows[(size_t)i] = const_cast<png_bytep>(pixels + (size_t)i * width * channels);
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("PNG encode error for " + path.string() + ": " + err.message);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, (png_uint_32)width, (png_uint_32)height, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline bool luma_salient(const uint8_t* px, int channels) {
  if (channels == 1) return px[0] > 127;
  const int64_t luma1000 = 299LL * px[0] + 587LL * px[1] + 114LL * px[2];
  return luma1000 > 127000;
}

}  // namespace

BinaryMask load_mask(const std::filesystem::path& path) {
  const RawPng raw = read_png(path);
  BinaryMask mask(raw.height, raw.width);
  for (int i = 0; i < raw.height; ++i) {
    for (int j = 0; j < raw.width; ++j) {
      const uint8_t* px = raw.pixels.data() + ((size_t)i * raw.width + j) * raw.channels;
      mask.set(i, j, luma_salient(px, raw.channels));
    }
  }
  return mask;
}

void save_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<uint8_t> pixels((size_t)mask.height * mask.width);
  for (size_t e = 0; e < pixels.size(); ++e) pixels[e] = mask.data[e] ? 255 : 0;
  write_png(path, pixels.data(), mask.height, mask.width, 1);
}

Image load_image(const std::filesystem::path& path) {
  const RawPng raw = read_png(path);
  Image img(3, raw.height, raw.width);
  for (int i = 0; i < raw.height; ++i) {
    for (int j = 0; j < raw.width; ++j) {
      const uint8_t* px = raw.pixels.data() + ((size_t)i * raw.width + j) * raw.channels;
      for (int c = 0; c < 3; ++c) {
        img.set(c, i, j, (raw.channels == 1 ? px[0] : px[c]) / 255.0f);
      }
    }
  }
  return img;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3) throw DataError("save_image expects 3 channels");
  std::vector<uint8_t> pixels((size_t)image.height * image.width * 3);
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, i, j), 0.0f, 1.0f);
        pixels[((size_t)i * image.width + j) * 3 + c] = (uint8_t)std::lround(v * 255.0);
      }
    }
  }
  write_png(path, pixels.data(), image.height, image.width, 3);
}

std::vector<float> load_gray_map(const std::filesystem::path& path, int* height, int* width) {
  const RawPng raw = read_png(path);
  std::vector<float> map((size_t)raw.height * raw.width);
  for (int i = 0; i < raw.height; ++i) {
    for (int j = 0; j < raw.width; ++j) {
      const uint8_t* px = raw.pixels.data() + ((size_t)i * raw.width + j) * raw.channels;
      float v;
      if (raw.channels == 1) {
        v = px[0] / 255.0f;
      } else {
        v = (float)((299LL * px[0] + 587LL * px[1] + 114LL * px[2]) / 1000.0 / 255.0);
      }
      map[(size_t)i * raw.width + j] = v;
    }
  }
  *height = raw.height;
  *width = raw.width;
  return map;
}

// ------------------------------------------------------------- manifest ----

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  Manifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : ".";
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // trim
    auto is_space = [](unsigned char c) { return std::isspace(c); };
    while (!line.empty() && is_space(line.back())) line.pop_back();
    size_t start = 0;
    while (start < line.size() && is_space(line[start])) ++start;
    if (start >= line.size() || line[start] == '#') continue;

    std::vector<std::string> fields;
    std::stringstream ss(line.substr(start));
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2 || fields.size() > 3) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected image,mask[,instances_dir]");
    }
    ManifestRecord rec;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : m.base_dir / fp;
    };
    rec.image = resolve(fields[0]);
    rec.mask = resolve(fields[1]);
    if (fields.size() == 3 && !fields[2].empty()) rec.instances_dir = resolve(fields[2]);
    m.records.push_back(std::move(rec));
  }
  return m;
}

void validate_manifest(const Manifest& manifest) {
  for (size_t r = 0; r < manifest.records.size(); ++r) {
    const ManifestRecord& rec = manifest.records[r];
    const std::string where = "manifest record " + std::to_string(r + 1) + " (" +
                              rec.image.string() + ")";
    if (!std::filesystem::exists(rec.image)) throw DataError(where + ": image file missing");
    if (!std::filesystem::exists(rec.mask)) {
      throw DataError(where + ": mask file missing: " + rec.mask.string());
    }
    const Image img = load_image(rec.image);
    const BinaryMask mask = load_mask(rec.mask);
    if (img.height != mask.height || img.width != mask.width) {
      throw DataError(where + ": image is " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " but mask is " + std::to_string(mask.width) +
                      "x" + std::to_string(mask.height));
    }
    if (!rec.instances_dir.empty() && !std::filesystem::is_directory(rec.instances_dir)) {
      throw DataError(where + ": instances dir missing: " + rec.instances_dir.string());
    }
  }
}

std::vector<Sample> load_samples(const Manifest& manifest) {
  std::vector<Sample> samples;
  samples.reserve(manifest.records.size());
  for (const ManifestRecord& rec : manifest.records) {
    Sample s;
    s.id = rec.image.stem().string();
    s.image = load_image(rec.image);
    s.mask = load_mask(rec.mask);
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
      throw DataError("sample " + s.id + ": image/mask dimensions differ");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ------------------------------------------------------------ synthetic ----

void SyntheticSpec::validate() const {
  if (count < 1) throw DataError("synthetic spec: count must be >= 1");
  if (image_size < 16) throw DataError("synthetic spec: image_size must be >= 16");
  if (shapes_min < 1 || shapes_max < shapes_min) {
    throw DataError("synthetic spec: bad shapes range");
  }
  if (kinds.empty()) throw DataError("synthetic spec: kinds must be nonempty");
  for (const auto& k : kinds) {
    if (k != "rectangle" && k != "ellipse" && k != "ring") {
      throw DataError("synthetic spec: unknown shape kind '" + k + "'");
    }
  }
  if (contrast_min <= 0.0 || contrast_max < contrast_min || contrast_max > 0.9) {
    throw DataError("synthetic spec: bad contrast range");
  }
  if (noise < 0.0 || noise > 0.3) throw DataError("synthetic spec: noise must lie in [0,0.3]");
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
  json j;
  j["count"] = spec.count;
  j["image_size"] = spec.image_size;
  j["shapes_min"] = spec.shapes_min;
  j["shapes_max"] = spec.shapes_max;
  j["kinds"] = spec.kinds;
  j["contrast_min"] = spec.contrast_min;
  j["contrast_max"] = spec.contrast_max;
  j["noise"] = spec.noise;
  j["seed"] = spec.seed;
  return j.dump(2);
}

SyntheticSpec synthetic_spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("synthetic spec parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("synthetic spec must be a JSON object");
  static const std::vector<std::string> known = {"count",        "image_size",  "shapes_min",
                                                 "shapes_max",   "kinds",       "contrast_min",
                                                 "contrast_max", "noise",       "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw DataError("unknown key '" + it.key() + "' in synthetic spec");
    }
  }
  SyntheticSpec spec;
  try {
    if (j.contains("count")) spec.count = j["count"].get<int>();
    if (j.contains("image_size")) spec.image_size = j["image_size"].get<int>();
    if (j.contains("shapes_min")) spec.shapes_min = j["shapes_min"].get<int>();
    if (j.contains("shapes_max")) spec.shapes_max = j["shapes_max"].get<int>();
    if (j.contains("kinds")) spec.kinds = j["kinds"].get<std::vector<std::string>>();
    if (j.contains("contrast_min")) spec.contrast_min = j["contrast_min"].get<double>();
    if (j.contains("contrast_max")) spec.contrast_max = j["contrast_max"].get<double>();
    if (j.contains("noise")) spec.noise = j["noise"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("synthetic spec type error: ") + e.what());
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synthetic spec: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return synthetic_spec_from_json(ss.str());
}

namespace {

double unit(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + unit(rng) * (hi - lo); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + (int)(rng() % (uint64_t)(hi - lo + 1));
}

double normal(std::mt19937_64& rng) {
  double u1 = unit(rng);
  while (u1 <= 1e-300) u1 = unit(rng);
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

BinaryMask rasterize_shape(std::mt19937_64& rng, const std::string& kind, int size) {
  BinaryMask m(size, size);
  const int lo = std::max(3, size / 12);
  const int hi = std::max(lo + 1, size / 4);
  const int ry = uniform_int(rng, lo, hi);
  const int rx = uniform_int(rng, lo, hi);
  const int cy = uniform_int(rng, ry + 1, size - 2 - ry);
  const int cx = uniform_int(rng, rx + 1, size - 2 - rx);
  if (kind == "rectangle") {
    for (int i = cy - ry; i <= cy + ry; ++i) {
      for (int j = cx - rx; j <= cx + rx; ++j) m.set(i, j, 1);
    }
  } else if (kind == "ellipse") {
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double dy = (i - cy) / (double)ry;
        const double dx = (j - cx) / (double)rx;
        if (dy * dy + dx * dx <= 1.0) m.set(i, j, 1);
      }
    }
  } else {  // ring
    const double inner = uniform(rng, 0.45, 0.6);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double dy = (i - cy) / (double)ry;
        const double dx = (j - cx) / (double)rx;
        const double d2 = dy * dy + dx * dx;
        if (d2 <= 1.0 && d2 >= inner * inner) m.set(i, j, 1);
      }
    }
  }
  return m;
}

}  // namespace

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "instances");

  std::mt19937_64 rng(spec.seed);
  const int size = spec.image_size;

  std::ofstream manifest_out(out_dir / "manifest.csv");
  if (!manifest_out) throw DataError("cannot write manifest in " + out_dir.string());
  manifest_out << "# image,mask,instances_dir\n";

  for (int idx = 0; idx < spec.count; ++idx) {
    char id[32];
    std::snprintf(id, sizeof(id), "img_%04d", idx);

    BinaryMask mask(size, size);
    std::vector<BinaryMask> instances;
    for (int attempt = 0; attempt < 200; ++attempt) {
      instances.clear();
      const int n_shapes = uniform_int(rng, spec.shapes_min, spec.shapes_max);
      for (int s = 0; s < n_shapes; ++s) {
        const std::string& kind = spec.kinds[(size_t)uniform_int(rng, 0, (int)spec.kinds.size() - 1)];
        instances.push_back(rasterize_shape(rng, kind, size));
      }
      BinaryMask unite(size, size);
      for (const auto& inst : instances) {
        for (size_t e = 0; e < unite.data.size(); ++e) unite.data[e] |= inst.data[e];
      }
      unite = erase_isolated_pixels(unite, PatternKind::N4);
      const double fraction = (double)unite.salient_count() / ((double)size * size);
      if (fraction < 0.02 || fraction > 0.6) continue;
      // Instance masks are clipped to the final mask so their union matches it.
      for (auto& inst : instances) {
        for (size_t e = 0; e < inst.data.size(); ++e) inst.data[e] &= unite.data[e];
      }
      instances.erase(std::remove_if(instances.begin(), instances.end(),
                                     [](const BinaryMask& m) { return m.salient_count() == 0; }),
                      instances.end());
      mask = std::move(unite);
      break;
    }
    if (mask.salient_count() == 0) {
      throw DataError("synthetic generator failed to place shapes; adjust the spec");
    }

    // Render: textured background, one fill color per instance.
    const double bg = uniform(rng, 0.12, 0.4);
    Image img(3, size, size);
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) img.set(c, i, j, (float)bg);
      }
    }
    for (const auto& inst : instances) {
      const double contrast = uniform(rng, spec.contrast_min, spec.contrast_max);
      double fill[3];
      for (double& f : fill) f = std::clamp(bg + contrast + uniform(rng, -0.05, 0.05), 0.0, 0.98);
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          if (!inst.at(i, j)) continue;
          for (int c = 0; c < 3; ++c) img.set(c, i, j, (float)fill[c]);
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          const double v = img.at(c, i, j) + normal(rng) * spec.noise;
          img.set(c, i, j, (float)std::clamp(v, 0.0, 1.0));
        }
      }
    }

    const fs::path image_path = out_dir / "images" / (std::string(id) + ".png");
    const fs::path mask_path = out_dir / "masks" / (std::string(id) + ".png");
    const fs::path inst_dir = out_dir / "instances" / id;
    fs::create_directories(inst_dir);
    save_image(image_path, img);
    save_mask(mask_path, mask);
    for (size_t s = 0; s < instances.size(); ++s) {
      char inst_name[32];
      std::snprintf(inst_name, sizeof(inst_name), "inst_%02d.png", (int)s);
      save_mask(inst_dir / inst_name, instances[s]);
    }
    manifest_out << "images/" << id << ".png,masks/" << id << ".png,instances/" << id << "\n";
  }
  manifest_out.flush();
  return load_manifest(out_dir / "manifest.csv");
}

// ----------------------------------------------------------- cube cache ----

namespace {

void write_u32_le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  out.write((const char*)b, 4);
}

uint32_t read_u32_le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read((char*)b, 4);
  if (!in) throw DataError(std::string("cube file truncated while reading ") + what);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

uint8_t pattern_id(PatternKind kind) {
  switch (kind) {
    case PatternKind::N4: return 0;
    case PatternKind::N8: return 1;
    default: return 2;
  }
}

PatternKind pattern_from_id(uint8_t id) {
  switch (id) {
    case 0: return PatternKind::N4;
    case 1: return PatternKind::N8;
    case 2: return PatternKind::N12;
    default: throw DataError("cube file: unknown pattern id " + std::to_string(id));
  }
}

}  // namespace

void write_cube(const std::filesystem::path& path, const ConnectivityCube& cube) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open cube file for writing: " + path.string());
  out.write("CCUB", 4);
  const uint8_t version = 1;
  out.write((const char*)&version, 1);
  const uint8_t pid = pattern_id(cube.pattern);
  out.write((const char*)&pid, 1);
  write_u32_le(out, (uint32_t)cube.height);
  write_u32_le(out, (uint32_t)cube.width);
  const uint8_t binary = cube.is_binary() ? 1 : 0;
  out.write((const char*)&binary, 1);

  if (binary) {
    // Bits packed LSB-first in (j,c) order, each image row padded to a byte.
    const int row_bits = cube.width * cube.channels;
    const int row_bytes = (row_bits + 7) / 8;
    std::vector<uint8_t> row((size_t)row_bytes);
    for (int i = 0; i < cube.height; ++i) {
      std::fill(row.begin(), row.end(), 0);
      for (int j = 0; j < cube.width; ++j) {
        for (int c = 0; c < cube.channels; ++c) {
          if (cube.at(i, j, c) != 0.0f) {
            const int bit = j * cube.channels + c;
            row[(size_t)(bit / 8)] |= (uint8_t)(1u << (bit % 8));
          }
        }
      }
      out.write((const char*)row.data(), row_bytes);
    }
  } else {
    for (float v : cube.values) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      write_u32_le(out, bits);
    }
  }
  if (!out) throw DataError("write failure on cube file: " + path.string());
}

ConnectivityCube read_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cube file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CCUB", 4) != 0) {
    throw DataError("not a CCUB cube file: " + path.string());
  }
  uint8_t version = 0, pid = 0, binary = 0;
  in.read((char*)&version, 1);
  if (!in || version != 1) throw DataError("unsupported cube file version in " + path.string());
  in.read((char*)&pid, 1);
  if (!in) throw DataError("cube file truncated while reading pattern");
  const PatternKind kind = pattern_from_id(pid);
  const uint32_t h = read_u32_le(in, "height");
  const uint32_t w = read_u32_le(in, "width");
  in.read((char*)&binary, 1);
  if (!in) throw DataError("cube file truncated while reading payload flag");
  if (h < 1 || w < 1) throw DataError("cube file: bad dimensions");

  ConnectivityCube cube((int)h, (int)w, kind);
  if (binary == 1) {
    const int row_bits = cube.width * cube.channels;
    const int row_bytes = (row_bits + 7) / 8;
    std::vector<uint8_t> row((size_t)row_bytes);
    for (int i = 0; i < cube.height; ++i) {
      in.read((char*)row.data(), row_bytes);
      if (!in) throw DataError("cube file truncated in bit payload: " + path.string());
      for (int j = 0; j < cube.width; ++j) {
        for (int c = 0; c < cube.channels; ++c) {
          const int bit = j * cube.channels + c;
          const bool set = (row[(size_t)(bit / 8)] >> (bit % 8)) & 1u;
          cube.set(i, j, c, set ? 1.0f : 0.0f);
        }
      }
    }
  } else if (binary == 0) {
    for (float& v : cube.values) {
      const uint32_t bits = read_u32_le(in, "float payload");
      std::memcpy(&v, &bits, 4);
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("cube file: value outside [0,1]");
    }
  } else {
    throw DataError("cube file: bad payload flag");
  }
  // Anything after the payload is corruption.
  char extra;
  in.read(&extra, 1);
  if (in) throw DataError("cube file has trailing bytes: " + path.string());
  return cube;
}

}  // namespace connseg
