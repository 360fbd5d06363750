// Copyright (c) the iclp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iclp/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "iclp/error.hpp"

namespace iclp::io {
namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw DataError("write failed for " + path.string());
}

TensorF read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const std::size_t h = img.height, w = img.width;
  TensorF out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

// Binary P5/P6 with maxval <= 65535.
TensorF read_pnm(const fs::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw DataError(path.string() + ": unsupported PNM type '" + magic + "'");
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(token());
    h = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PNM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw DataError(path.string() + ": malformed PNM header");
  ++pos;  // single whitespace after maxval
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w * h) * channels * bps;
  if (bytes.size() < pos + need) throw DataError(path.string() + ": truncated PNM data");
  TensorF out({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w * h); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = (i * channels + (channels == 3 ? c : 0)) * bps + pos;
      const unsigned v = bps == 2 ? (unsigned{bytes[src]} << 8) | bytes[src + 1] : bytes[src];
      out[c * static_cast<std::size_t>(w * h) + i] = static_cast<float>(v) * scale;
    }
  }
  return out;
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// ---- little-endian byte writer / reader ----

struct Writer {
  std::vector<std::uint8_t> out;
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    std::uint8_t b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    out.insert(out.end(), b, b + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), c, c + n);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;
  const std::string& origin;

  void need(std::size_t n, const char* what) const {
    if (in.size() - pos < n) {
      throw DataError(origin + ": truncated checkpoint while reading " + what + " at byte " + std::to_string(pos));
    }
  }
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint8_t b[sizeof(U)];
    std::memcpy(b, in.data() + pos, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    pos += sizeof(U);
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kU8:
      return 1;
  }
  return 0;
}

template <typename U>
std::vector<std::uint8_t> encode_scalars(std::span<const U> v) {
  Writer w;
  w.out.reserve(v.size() * sizeof(U));
  for (U x : v) w.put(x);
  return std::move(w.out);
}

template <typename U>
std::vector<U> decode_scalars(const std::vector<std::uint8_t>& payload, const std::string& name) {
  if (payload.size() % sizeof(U) != 0) throw DataError("tensor '" + name + "' has a ragged payload");
  std::vector<U> out(payload.size() / sizeof(U));
  Reader r{payload, 0, name};
  for (auto& x : out) x = r.get<U>("payload");
  return out;
}

}  // namespace

// ---- images ----

TensorF read_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing image file " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  throw DataError("unsupported image format: " + path.string());
}

void write_image(const fs::path& path, const TensorF& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
    throw ConfigError("write_image expects [1|3,H,W], got " + shape_str(img.shape()));
  }
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<std::uint8_t> buf(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) buf[(y * w + x) * c + k] = quantize(img.at(k, y, x));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(w);
    png.height = static_cast<png_uint_32>(h);
    png.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
      throw DataError("cannot write PNG " + path.string() + ": " + png.message);
    }
    return;
  }
  if (ext == ".ppm" || ext == ".pgm") {
    if ((ext == ".ppm") != (c == 3)) throw ConfigError(path.string() + ": channel count does not match extension");
    std::string header = (c == 3 ? "P6\n" : "P5\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> all(header.begin(), header.end());
    all.insert(all.end(), buf.begin(), buf.end());
    write_file(path, all.data(), all.size());
    return;
  }
  throw ConfigError("unsupported image extension: " + path.string());
}

// ---- datasets ----

bool ImageDataset::multitarget() const {
  for (const auto* split : {&train, &test})
    for (const auto& it : *split)
      if (it.labels.size() != 1) return true;
  return false;
}

std::vector<TensorF> ImageDataset::train_images() const {
  std::vector<TensorF> out;
  out.reserve(train.size());
  for (const auto& it : train) out.push_back(it.image);
  return out;
}

std::vector<TensorF> ImageDataset::test_images() const {
  std::vector<TensorF> out;
  out.reserve(test.size());
  for (const auto& it : test) out.push_back(it.image);
  return out;
}

std::vector<ImageItem> load_split_csv(const fs::path& root, const fs::path& csv,
                                      const std::vector<std::string>& classes) {
  std::ifstream in(csv);
  if (!in) throw DataError("missing split file " + csv.string());
  std::vector<ImageItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split_csv(t);
    if (lineno == 1 && fields[0] == "path") continue;  // optional header
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    if (fields.size() < 2) throw DataError(where + ": expected 'path,label[,label...]', got '" + t + "'");
    ImageItem item;
    item.path = fields[0];
    if (item.path.empty()) throw DataError(where + ": empty image path");
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto it = std::find(classes.begin(), classes.end(), fields[i]);
      if (it == classes.end()) throw DataError(where + ": unknown class '" + fields[i] + "'");
      const int label = static_cast<int>(it - classes.begin());
      if (std::find(item.labels.begin(), item.labels.end(), label) != item.labels.end()) {
        throw DataError(where + ": duplicate label '" + fields[i] + "'");
      }
      item.labels.push_back(label);
    }
    try {
      const fs::path full = root / item.path;
      if (fs::is_directory(full)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(full)) {
          const std::string ext = lower_ext(e.path());
          if (e.is_regular_file() && (ext == ".png" || ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("clip directory " + full.string() + " holds no frames");
        for (const auto& f : files) item.frames.push_back(read_image(f));
        item.image = item.frames[item.frames.size() / 2];
      } else {
        item.image = read_image(full);
      }
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    items.push_back(std::move(item));
  }
  if (items.empty()) throw DataError("empty split " + csv.string());
  return items;
}

ImageDataset load_image_folder(const fs::path& root) {
  const fs::path classes_file = root / "classes.txt";
  std::ifstream in(classes_file);
  if (!in) throw DataError("missing file " + classes_file.string());
  ImageDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (std::find(ds.class_names.begin(), ds.class_names.end(), t) != ds.class_names.end()) {
      throw DataError(classes_file.string() + ": duplicate class '" + t + "'");
    }
    ds.class_names.push_back(t);
  }
  if (ds.class_names.empty()) throw DataError(classes_file.string() + ": no classes");
  ds.train = load_split_csv(root, root / "train.csv", ds.class_names);
  ds.test = load_split_csv(root, root / "test.csv", ds.class_names);
  for (const auto& a : ds.train)
    for (const auto& b : ds.test)
      if (a.path == b.path) throw DataError("image " + a.path + " appears in both train and test");
  return ds;
}

void save_image_folder(const ImageDataset& ds, const fs::path& root) {
  fs::create_directories(root);
  {
    std::ofstream out(root / "classes.txt", std::ios::trunc);
    for (const auto& c : ds.class_names) out << c << "\n";
    if (!out) throw DataError("cannot write " + (root / "classes.txt").string());
  }
  auto split = [&](const std::vector<ImageItem>& items, const std::string& name) {
    std::ofstream out(root / (name + ".csv"), std::ios::trunc);
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::string rel = items[i].path;
      if (rel.empty()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%05zu.png", i);
        rel = name + "/" + buf;
      }
      if (items[i].frames.empty()) {
        write_image(root / rel, items[i].image);
      } else {
        if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".png") rel.resize(rel.size() - 4);
        for (std::size_t f = 0; f < items[i].frames.size(); ++f) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "frame_%04zu.png", f);
          write_image(root / rel / buf, items[i].frames[f]);
        }
      }
      out << rel;
      for (int l : items[i].labels) out << "," << ds.class_names.at(static_cast<std::size_t>(l));
      out << "\n";
    }
    if (!out) throw DataError("cannot write " + (root / (name + ".csv")).string());
  };
  split(ds.train, "train");
  split(ds.test, "test");
}

// ---- synthetic nuisance dataset ----

void SyntheticSpec::validate() const {
  if (num_classes < 1 || num_classes > 8) throw ConfigError("synthetic num_classes must be in 1..8");
  if (train_per_class == 0 || test_per_class == 0) throw ConfigError("synthetic sample counts must be positive");
  if (size < 16) throw ConfigError("synthetic image size must be >= 16");
  if (!(illumination_min > 0.0) || illumination_max < illumination_min || illumination_max > 2.0) {
    throw ConfigError("illumination range must satisfy 0 < min <= max <= 2");
  }
  if (rotation_max_deg < rotation_min_deg) throw ConfigError("rotation range is empty");
  if (translation < 0.0 || translation > static_cast<double>(size) / 4.0) {
    throw ConfigError("translation must be in [0, size/4]");
  }
}

Nuisance sample_nuisance(const SyntheticSpec& spec, Rng& rng) {
  Nuisance n;
  n.rotation = rng.uniform(spec.rotation_min_deg, spec.rotation_max_deg) * std::numbers::pi / 180.0;
  n.illumination = rng.uniform(spec.illumination_min, spec.illumination_max);
  n.dx = rng.uniform(-spec.translation, spec.translation);
  n.dy = rng.uniform(-spec.translation, spec.translation);
  n.texture_phase = spec.texture ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
  n.texture_angle = spec.texture ? rng.uniform(0.0, std::numbers::pi) : 0.0;
  n.texture_freq = spec.texture ? rng.uniform(1.0 / 8.0, 1.0 / 4.0) : 0.0;
  // Background: dark and chromatic; foreground: neutral and brighter. The
  // base image never exceeds 0.5 (0.35 * 1.3 texture peak).
  const double lb = rng.uniform(0.08, 0.16);
  if (spec.background_chromaticity) {
    std::array<double, 3> w{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
    const double s = (w[0] + w[1] + w[2]) / 3.0;
    for (std::size_t c = 0; c < 3; ++c) n.background[c] = lb * w[c] / s;
  } else {
    n.background = {lb, lb, lb};
  }
  const double lf = rng.uniform(0.25, 0.35);
  n.foreground = {lf, lf, lf};
  return n;
}

namespace {

// Shape membership in the unit frame (circumradius about 1).
bool inside_shape(std::size_t cls, double u, double v) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0:  // circle
      return r <= 0.9;
    case 1:  // square
      return std::max(std::abs(u), std::abs(v)) <= 0.7;
    case 2: {  // triangle, apex up, circumradius 1
      for (double a : {-std::numbers::pi / 2, std::numbers::pi / 6, 5 * std::numbers::pi / 6}) {
        if (u * std::cos(a) + v * std::sin(a) > 0.5) return false;
      }
      return true;
    }
    case 3:  // cross
      return (std::abs(u) <= 0.28 && std::abs(v) <= 0.95) || (std::abs(v) <= 0.28 && std::abs(u) <= 0.95);
    case 4:  // ring
      return r <= 0.95 && r >= 0.55;
    case 5:  // bar
      return std::abs(u) <= 1.0 && std::abs(v) <= 0.3;
    case 6:  // L
      return (u >= -0.75 && u <= -0.2 && std::abs(v) <= 0.8) || (u >= -0.75 && u <= 0.75 && v >= 0.25 && v <= 0.8);
    case 7: {  // five-pointed star
      const double period = 2.0 * std::numbers::pi / 5.0;
      double phi = std::atan2(u, -v);  // tip at the top
      if (phi < 0) phi += 2.0 * std::numbers::pi;
      const double t = std::fmod(phi, period) / period;
      const double tip = 1.0 - 2.0 * std::abs(t - 0.5);
      return r <= 0.42 + 0.58 * (1.0 - tip);
    }
    default:
      throw ConfigError("shape class out of range: " + std::to_string(cls));
  }
}

}  // namespace

TensorF render_shape(std::size_t cls, std::size_t size, const Nuisance& n) {
  if (cls >= 8) throw ConfigError("shape class out of range: " + std::to_string(cls));
  constexpr int kSuper = 4;
  const double radius = 0.25 * static_cast<double>(size) * n.scale;
  const double centre = 0.5 * static_cast<double>(size);
  const double cr = std::cos(n.rotation), sr = std::sin(n.rotation);
  const double ta = std::cos(n.texture_angle), tb = std::sin(n.texture_angle);
  TensorF out({3, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSuper - centre - n.dx;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSuper - centre - n.dy;
          // inverse rotation into the shape frame; v points down
          const double u = (cr * px + sr * py) / radius;
          const double v = (-sr * px + cr * py) / radius;
          hits += inside_shape(cls, u, v) ? 1 : 0;
        }
      }
      const double cov = static_cast<double>(hits) / (kSuper * kSuper);
      double tex = 1.0;
      if (n.texture_freq > 0.0) {
        const double s = static_cast<double>(x) * ta + static_cast<double>(y) * tb;
        tex += 0.3 * std::sin(2.0 * std::numbers::pi * n.texture_freq * s + n.texture_phase);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = cov * n.foreground[c] * tex + (1.0 - cov) * n.background[c];
        out.at(c, y, x) = static_cast<float>(std::min(1.0, base * n.illumination));
      }
    }
  }
  return out;
}

ImageDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  ImageDataset ds;
  for (std::size_t c = 0; c < spec.num_classes; ++c) ds.class_names.emplace_back(kShapeNames[c]);
  const Rng root(spec.seed);
  auto make = [&](std::size_t per_class, std::uint64_t stream) {
    Rng rng = root.fork(stream);
    std::vector<ImageItem> items;
    items.reserve(per_class * spec.num_classes);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const Nuisance n = sample_nuisance(spec, rng);
        ImageItem item;
        item.image = render_shape(c, spec.size, n);
        item.labels = {static_cast<int>(c)};
        items.push_back(std::move(item));
      }
    }
    return items;
  };
  ds.train = make(spec.train_per_class, 1);
  ds.test = make(spec.test_per_class, 2);
  return ds;
}

// ---- checkpoints ----

void Checkpoint::put_raw(NamedTensor t) {
  if (t.name.empty()) throw ConfigError("checkpoint tensor name must not be empty");
  for (auto& existing : tensors_) {
    if (existing.name == t.name) {
      existing = std::move(t);
      return;
    }
  }
  tensors_.push_back(std::move(t));
}

void Checkpoint::put(const std::string& name, const TensorF& t) {
  put_raw({name, DType::kF32, t.shape(), encode_scalars<float>(t.span())});
}

void Checkpoint::put(const std::string& name, const TensorD& t) {
  put_raw({name, DType::kF64, t.shape(), encode_scalars<double>(t.span())});
}

void Checkpoint::put_string(const std::string& name, const std::string& value) {
  put_raw({name, DType::kU8, {value.size()}, std::vector<std::uint8_t>(value.begin(), value.end())});
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const NamedTensor& t) { return t.name == name; });
}

const NamedTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw DataError("checkpoint has no tensor '" + name + "'");
}

TensorF Checkpoint::get_f32(const std::string& name) const {
  const auto& t = find(name);
  if (t.dtype != DType::kF32) throw DataError("checkpoint tensor '" + name + "' is not f32");
  return TensorF(t.shape, decode_scalars<float>(t.payload, name));
}

TensorD Checkpoint::get_f64(const std::string& name) const {
  const auto& t = find(name);
  if (t.dtype != DType::kF64) throw DataError("checkpoint tensor '" + name + "' is not f64");
  return TensorD(t.shape, decode_scalars<double>(t.payload, name));
}

std::string Checkpoint::get_string(const std::string& name) const {
  const auto& t = find(name);
  if (t.dtype != DType::kU8) throw DataError("checkpoint tensor '" + name + "' is not a byte string");
  return std::string(t.payload.begin(), t.payload.end());
}

std::vector<std::string> Checkpoint::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& t : tensors_)
    if (t.name.rfind(prefix, 0) == 0) out.push_back(t.name);
  return out;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes("ICLP", 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(config_digest);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.put<std::uint64_t>(d);
    w.bytes(t.payload.data(), t.payload.size());
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Reader r{bytes, 0, origin};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "ICLP", 4) != 0) throw DataError(origin + ": not an ICLP checkpoint (bad magic)");
  r.pos = 4;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw DataError(origin + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kVersion) + ")");
  }
  Checkpoint ck;
  ck.config_digest = r.get<std::uint64_t>("config digest");
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint32_t>("name length");
    r.need(len, "name");
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
    r.pos += len;
    const auto code = r.get<std::uint8_t>("dtype");
    if (code > static_cast<std::uint8_t>(DType::kU8)) {
      throw DataError(origin + ": tensor '" + t.name + "' has unknown dtype code " + std::to_string(code));
    }
    t.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 16) throw DataError(origin + ": tensor '" + t.name + "' has implausible rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("shape");
      if (d > (std::uint64_t{1} << 40)) throw DataError(origin + ": tensor '" + t.name + "' has implausible shape");
      t.shape.push_back(static_cast<std::size_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    const std::size_t nbytes = n * dtype_size(t.dtype);
    r.need(nbytes, "payload");
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + nbytes));
    r.pos += nbytes;
    tensors.push_back(std::move(t));
  }
  if (r.pos != bytes.size()) throw DataError(origin + ": trailing bytes after the tensor table");
  ck.tensors_ = std::move(tensors);
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = ckpt.serialize();
  // write to a sibling then rename, so readers never see a partial file
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp, bytes.data(), bytes.size());
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, std::optional<std::uint64_t> expected_digest, std::string* warning) {
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
  Checkpoint ck = Checkpoint::deserialize(read_file(path), path.string());
  if (expected_digest && *expected_digest != ck.config_digest) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "checkpoint config digest %016llx differs from the current config %016llx",
                  static_cast<unsigned long long>(ck.config_digest),
                  static_cast<unsigned long long>(*expected_digest));
    if (warning) *warning = path.string() + ": " + buf;
  }
  return ck;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- metrics ----

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_metrics(const fs::path& path, const std::vector<MetricRow>& rows, bool append) {
  for (const auto& r : rows) {
    for (const std::string* f : {&r.run_id, &r.phase, &r.metric}) {
      if (f->find_first_of(",\n\r") != std::string::npos) {
        throw ConfigError("metrics field '" + *f + "' contains a comma or newline");
      }
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write metrics " + path.string());
  if (fresh) out << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.phase << ',' << r.epoch << ',' << r.layer << ',' << r.metric << ','
        << format_double(r.value) << ',' << r.seed << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<MetricRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing metrics file " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != kMetricsHeader) throw DataError(path.string() + ":1: unexpected metrics header '" + line + "'");
      continue;
    }
    const auto f = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 7) throw DataError(where + ": expected 7 fields, got " + std::to_string(f.size()));
    MetricRow r;
    try {
      std::size_t used = 0;
      r.run_id = f[0];
      r.phase = f[1];
      r.epoch = std::stol(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("epoch");
      r.layer = std::stol(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("layer");
      r.metric = f[4];
      r.value = std::stod(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument("value");
      r.seed = std::stoull(f[6], &used);
      if (used != f[6].size()) throw std::invalid_argument("seed");
    } catch (const std::exception&) {
      throw DataError(where + ": malformed metrics row '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace iclp::io
