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


// Commands behind the CLI and the C API: each one validates its inputs,
// runs deterministically from (config, seed, input files) and writes its
// artifacts under run.out_dir.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "iclp/clapp.hpp"
#include "iclp/config.hpp"
#include "iclp/data_io.hpp"
#include "iclp/movnet.hpp"
#include "iclp/probe.hpp"

namespace iclp::pipeline {

using Log = std::function<void(const std::string&)>;

bool is_movnet(const std::string& pathway);
ops::Operator pathway_operator(const std::string& pathway);
std::string checkpoint_filename(const std::string& pathway);

/// Initialisation stream of a pathway: depends on (seed, name) only, so the
/// same pathway starts from the same weights in every mode.
Rng pathway_rng(std::uint64_t seed, const std::string& pathway);

io::ImageDataset load_dataset(const config::RunConfig& cfg);
movnet::ActionSpec action_spec(const config::RunConfig& cfg);

// ---- checkpoints ----

io::Checkpoint pathway_checkpoint(const clapp::ImagePathway& p, clapp::TrainMode mode, std::uint64_t digest);
clapp::ImagePathway pathway_from_checkpoint(const io::Checkpoint& ck);
io::Checkpoint movnet_checkpoint(const movnet::MovNet<float>& m, std::uint64_t digest);
movnet::MovNet<float> movnet_from_checkpoint(const io::Checkpoint& ck);
io::Checkpoint probe_checkpoint(const probe::LinearProbe& p, const std::vector<std::string>& pathways,
                                std::uint64_t digest);
probe::LinearProbe probe_from_checkpoint(const io::Checkpoint& ck, std::vector<std::string>* pathways = nullptr);

/// A frozen model: image pathways plus an optional MovNet, in fusion order.
struct FrozenModel {
  std::vector<clapp::ImagePathway> pathways;
  std::vector<movnet::MovNet<float>> movnets;  // at most one
  std::vector<std::string> names;              // fusion order over both

  std::uint64_t checksum() const;
};

/// Loads each checkpoint (pathway or MovNet) and sorts into fusion order.
/// Digest mismatches are reported through `log`.
FrozenModel load_model(const std::vector<std::filesystem::path>& checkpoints, std::uint64_t digest, const Log& log);

/// Fused features of dataset items; MovNet slices need clip items.
probe::FeatureSet model_features(const FrozenModel& m, const std::vector<io::ImageItem>& items,
                                 const seq::PatchGeometry& geom);
probe::FeatureSet model_features(const FrozenModel& m, const std::vector<TensorF>& images,
                                 const seq::PatchGeometry& geom);

// ---- commands ----

/// Renders the configured dataset to a folder (PNG + CSV layout).
void gen_data(const config::RunConfig& cfg, const std::filesystem::path& out_dir, const Log& log = {});

/// Operator channels of one image, min-max scaled and tiled (7 per row)
/// into a grayscale PNG.
void decompose(const std::filesystem::path& image, const std::string& op, const std::filesystem::path& out_png);

struct TrainResult {
  std::map<std::string, std::filesystem::path> checkpoints;
  std::filesystem::path metrics;
};

/// Trains every configured pathway (in parallel, one job per pathway),
/// writes `<pathway>.ckpt` and a fresh metrics.csv of per-epoch losses.
TrainResult train(const config::RunConfig& cfg, const Log& log = {});

struct ReportRow {
  std::string model;
  std::string metric;
  probe::Summary summary;
};

void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);

struct ProbeResult {
  std::vector<ReportRow> report;
  std::filesystem::path probe_checkpoint;
};

/// Probes frozen checkpoints once per seed of run.seeds; writes probe.ckpt
/// (first seed), probe_metrics.csv and report.csv.
ProbeResult probe_checkpoints(const config::RunConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                              const Log& log = {});

struct ModelSpec {
  std::string name;
  std::vector<std::filesystem::path> checkpoints;
};

struct DegradationEntry {
  std::string model;
  std::uint64_t seed = 0;
  probe::DegradationRow row;
};

struct PerturbResult {
  std::vector<DegradationEntry> rows;
};

/// Probe on clean training features, then accuracy on each perturbed test
/// set (eval.perturbations, or all 25 when none are configured). Writes
/// degradation.csv and degradation.svg.
PerturbResult perturb(const config::RunConfig& cfg, const std::vector<ModelSpec>& models, const Log& log = {});

struct AblationResult {
  /// model -> top-1 per seed (run.seeds order)
  std::map<std::string, std::vector<double>> top1;
  std::vector<DegradationEntry> degradation;  // empty without eval.perturbations
  std::vector<ReportRow> report;
};

inline constexpr const char* kSinglePlain = "single_plain";
inline constexpr const char* kThreePlain = "three_plain";
inline constexpr const char* kDecomposed = "decomposed";
inline constexpr const char* kDecomposedHinge = "decomposed_hingecpc";

/// Trains and probes one plain encoder, three plain encoders and the three
/// operator encoders (plus the HingeCPC decomposition when enabled) for each
/// seed. Writes ablation.csv, ablation.svg, metrics.csv and, with
/// perturbations, degradation.csv and degradation.svg.
AblationResult ablate(const config::RunConfig& cfg, const Log& log = {});

/// One SVG per run_id with a loss curve per layer. Returns the files written.
std::vector<std::filesystem::path> plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir);

}  // namespace iclp::pipeline
