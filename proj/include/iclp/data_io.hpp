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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iclp/rng.hpp"
#include "iclp/tensor.hpp"

namespace iclp::io {

// ---- images ----------------------------------------------------------------------

/// PNG (8/16-bit gray, gray+alpha, RGB, RGBA) or binary PPM/PGM. Returns
/// [3,H,W] in [0,1]; gray is replicated and alpha dropped.
TensorF read_image(const std::filesystem::path& path);

/// [1,H,W] or [3,H,W], values clamped to [0,1] then quantised to 8 bits.
/// The format follows the extension (.png, .ppm, .pgm).
void write_image(const std::filesystem::path& path, const TensorF& img);

// ---- datasets --------------------------------------------------------------------

struct ImageItem {
  std::string path;  // relative to the dataset root; empty for in-memory items
  TensorF image;     // [3,H,W]; the central frame for clip items
  std::vector<int> labels;
  std::vector<TensorF> frames;  // clip items only
};

/// Folder layout: classes.txt (one class name per line), train.csv and
/// test.csv with rows `relative/path.png,label[,label...]`. A path naming a
/// directory is a clip: its images, sorted by file name, are the frames.
struct ImageDataset {
  std::vector<std::string> class_names;
  std::vector<ImageItem> train;
  std::vector<ImageItem> test;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  bool multitarget() const;
  std::vector<TensorF> train_images() const;
  std::vector<TensorF> test_images() const;
};

ImageDataset load_image_folder(const std::filesystem::path& root);

/// One split from a CSV; `classes` resolves label names.
std::vector<ImageItem> load_split_csv(const std::filesystem::path& root, const std::filesystem::path& csv,
                                      const std::vector<std::string>& classes);

/// Writes images as PNG plus classes.txt, train.csv and test.csv.
void save_image_folder(const ImageDataset& ds, const std::filesystem::path& root);

struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t size = 64;
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 360.0;
  double illumination_min = 0.3;
  double illumination_max = 2.0;
  double translation = 8.0;  // pixels, uniform in [-t, t] on each axis
  bool texture = true;
  bool background_chromaticity = true;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr const char* kShapeNames[8] = {"circle", "square", "triangle", "cross", "ring", "bar", "L", "star"};

/// Nuisance factors of one rendered sample.
struct Nuisance {
  double rotation = 0.0;      // radians
  double illumination = 1.0;  // multiplies the whole image
  double dx = 0.0, dy = 0.0;
  double texture_phase = 0.0;
  double texture_angle = 0.0;
  double texture_freq = 0.0;
  std::array<double, 3> background{0.25, 0.25, 0.25};
  std::array<double, 3> foreground{0.45, 0.45, 0.45};
  double scale = 1.0;  // shape radius relative to the default
};

Nuisance sample_nuisance(const SyntheticSpec& spec, Rng& rng);

/// Shape `cls` under the given nuisance. Colours of the base image stay at
/// most 0.5 so illumination scales up to 2 never clip.
TensorF render_shape(std::size_t cls, std::size_t size, const Nuisance& n);

/// Class-balanced synthetic dataset, deterministic from the seed.
ImageDataset gen_synthetic(const SyntheticSpec& spec);

// ---- checkpoints -------------------------------------------------------------------

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

struct NamedTensor {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian scalars
};

/// Binary container:
///   "ICLP" | u32 version | u64 config digest | u32 count |
///   count x (u32 name length | name | u8 dtype | u32 rank | rank x u64 dim |
///            payload)
/// All integers and scalars little-endian.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_digest = 0;

  void put(const std::string& name, const TensorF& t);
  void put(const std::string& name, const TensorD& t);
  void put_string(const std::string& name, const std::string& value);

  bool has(const std::string& name) const;
  TensorF get_f32(const std::string& name) const;
  TensorD get_f64(const std::string& name) const;
  std::string get_string(const std::string& name) const;

  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

 private:
  const NamedTensor& find(const std::string& name) const;
  void put_raw(NamedTensor t);
  std::vector<NamedTensor> tensors_;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws DataError on a missing, truncated or malformed file. When
/// `expected_digest` differs from the stored one, a message is written to
/// `warning` (if given) and loading continues.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest = {},
                           std::string* warning = nullptr);

/// FNV-1a, used for config digests.
std::uint64_t fnv1a(const std::string& text);

// ---- metrics -------------------------------------------------------------------------

struct MetricRow {
  std::string run_id;
  std::string phase;
  long epoch = 0;
  long layer = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline constexpr const char* kMetricsHeader = "run_id,phase,epoch,layer,metric,value,seed";

/// Appends rows, writing the header when the file is new or empty. Values
/// are written with 17 significant digits so read-back is exact.
void write_metrics(const std::filesystem::path& path, const std::vector<MetricRow>& rows, bool append = true);
std::vector<MetricRow> read_metrics(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace iclp::io
