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


// Run configuration: a plain-text file of `key = value` lines grouped under
// `[section]` headers. Every key is registered below with its default.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iclp/clapp.hpp"
#include "iclp/data_io.hpp"
#include "iclp/movnet.hpp"
#include "iclp/probe.hpp"
#include "iclp/sequencer.hpp"

namespace iclp::config {

struct KeyDoc {
  const char* key;  // section.name
  const char* fallback;
  const char* doc;
  bool reference_default;  // value follows the reference training setup
};

/// All recognised keys in documentation order.
const std::vector<KeyDoc>& key_docs();

/// Human-readable key table for --help.
std::string describe_keys();

/// Parsed `section.key -> raw value`; unknown keys and malformed lines are
/// rejected with the line number.
std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& origin = "<config>");
std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path);

struct DataSource {
  std::string kind = "synthetic";  // synthetic | folder
  std::filesystem::path folder;
  io::SyntheticSpec synthetic;
};

struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // repeated runs for mean and std; defaults to {seed}
  std::filesystem::path out_dir = "runs/run";
  std::vector<std::string> pathways{"plain"};
  clapp::TrainMode mode = clapp::TrainMode::kClappLocal;
  DataSource data;

  EncoderPlan plan;
  clapp::TrainConfig train;
  std::size_t checkpoint_every = 0;  // intermediate checkpoints; 0 for the final one only
  probe::ProbeConfig probe;
  probe::Task task = probe::Task::kMulticlass;
  std::size_t topk = 5;
  probe::AverageMode average = probe::AverageMode::kPerClass;
  double threshold = 0.5;

  std::vector<seq::PerturbSpec> perturbations;  // empty: none
  bool compare_hingecpc = false;                // ablation also trains decomposed HingeCPC

  movnet::MotionConfig motion;
  movnet::MovNetTrainConfig movnet;
  std::size_t motion_train_per_class = 200;
  std::size_t motion_test_per_class = 50;
  EncoderPlan movnet_plan;

  /// Canonical `key = value` dump of every resolved key, sorted.
  std::string canonical() const;
  std::uint64_t digest() const;
  /// Digest of the keys that shape trained encoders (seed, mode, data,
  /// encoder, train, movnet); stored in encoder checkpoints.
  std::uint64_t encoder_digest() const;
  void validate() const;
};

RunConfig from_kv(const std::map<std::string, std::string>& kv);
RunConfig load(const std::filesystem::path& path);
RunConfig from_text(const std::string& text);

/// "all", "none", or a comma list of kind:severity (severity may be 1-5 or
/// a range such as 1-3; a bare kind means 1-5).
std::vector<seq::PerturbSpec> parse_perturbations(const std::string& text);

}  // namespace iclp::config
