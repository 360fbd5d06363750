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


#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "iclp/config.hpp"
#include "iclp/error.hpp"
#include "test_util.hpp"

namespace iclp {
namespace {

std::string error_of(const std::string& text) {
  try {
    config::from_text(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = config::from_text("");
  EXPECT_EQ(c.plan.channels, (std::vector<std::size_t>{64, 64, 128, 128, 256, 256}));
  EXPECT_EQ(c.plan.pool_after, (std::vector<std::size_t>{2, 4}));
  EXPECT_DOUBLE_EQ(c.train.adam.lr, 1e-5);
  EXPECT_DOUBLE_EQ(c.train.adam.weight_decay, 5e-6);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_EQ(c.train.patch.size, 16u);
  EXPECT_EQ(c.train.patch.stride, 8u);
  EXPECT_EQ(c.train.max_offset, 5u);
  EXPECT_DOUBLE_EQ(c.probe.dropout, 0.5);
  EXPECT_EQ(c.mode, clapp::TrainMode::kClappLocal);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(c.movnet_plan.channels, c.plan.channels);
  EXPECT_TRUE(c.perturbations.empty());
}

TEST(Config, SectionsCommentsAndQuotes) {
  const auto c = config::from_text(
      "# header\n[run]\nid = \"a#b\"  # trailing\nseeds = 3,4\npathways = lbp, rgnorm\n");
  EXPECT_EQ(c.run_id, "a#b");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4}));
  EXPECT_EQ(c.pathways, (std::vector<std::string>{"lbp", "rgnorm"}));
  EXPECT_DOUBLE_EQ(config::from_text("train.lr = 2e-4").train.adam.lr, 2e-4);
}

TEST(Config, ErrorsNameTheLine) {
  const std::string bad_num = error_of("[train]\n\nlr = fast\n");
  EXPECT_NE(bad_num.find("train.lr"), std::string::npos) << bad_num;
  EXPECT_NE(bad_num.find("fast"), std::string::npos);
  const std::string unknown = error_of("[train]\nlearning_rate = 1\n");
  EXPECT_NE(unknown.find("<config>:2"), std::string::npos) << unknown;
  EXPECT_NE(unknown.find("train.learning_rate"), std::string::npos);
  EXPECT_NE(error_of("run.id = a\nrun.id = b\n").find(":2"), std::string::npos);
  EXPECT_NE(error_of("[train\n").find(":1"), std::string::npos);
  EXPECT_NE(error_of("just words\n").find(":1"), std::string::npos);
  EXPECT_THROW(config::from_text("train.batch_size = 1"), ConfigError);
  EXPECT_THROW(config::from_text("run.mode = backprop"), ConfigError);
  EXPECT_THROW(config::from_text("run.pathways = plain,sobel"), ConfigError);
  EXPECT_THROW(config::from_text("encoder.pool_after = 6"), ConfigError);
  EXPECT_THROW(config::from_text("probe.threshold = 1"), ConfigError);
  EXPECT_THROW(config::from_text("data.source = folder"), ConfigError);
  EXPECT_THROW(config::load("/nonexistent/x.cfg"), DataError);
}

TEST(Config, HelpListsEveryKeyWithProvenance) {
  const std::string help = config::describe_keys();
  std::set<std::string> keys;
  for (const auto& d : config::key_docs()) {
    const std::string key = d.key;
    EXPECT_TRUE(keys.insert(key).second) << "duplicate doc for " << key;
    const std::string name = key.substr(key.find('.') + 1);
    const std::string line = "  " + name + " = " + (std::string(d.fallback).empty() ? "\"\"" : d.fallback) + "  " +
                             (d.reference_default ? "(reference)" : "(local)");
    EXPECT_NE(help.find(line), std::string::npos) << key;
    EXPECT_NE(help.find(d.doc), std::string::npos) << key;
    // every documented default parses
    EXPECT_NO_THROW(config::from_text(key + " = " + d.fallback)) << key;
  }
  EXPECT_GT(keys.size(), 50u);
}

TEST(Config, DigestCoversEveryResolvedKey) {
  const auto base = config::from_text("");
  EXPECT_EQ(base.digest(), config::from_text("").digest());
  EXPECT_EQ(base.digest(), config::from_text("train.lr = 0.00001").digest());
  std::set<std::uint64_t> seen{base.digest()};
  for (const char* change : {"train.lr = 1e-4", "run.seed = 1", "probe.hidden = 128", "eval.perturbations = all",
                             "movnet.v_max = 4", "data.size = 32"}) {
    EXPECT_TRUE(seen.insert(config::from_text(change).digest()).second) << change;
  }
}

TEST(Config, EncoderDigestIgnoresEvaluationKeys) {
  const auto base = config::from_text("");
  for (const char* change : {"eval.perturbations = all", "probe.hidden = 128", "run.out_dir = elsewhere", "run.id = x"})
    EXPECT_EQ(config::from_text(change).encoder_digest(), base.encoder_digest()) << change;
  for (const char* change : {"train.lr = 1e-4", "run.seed = 1", "encoder.channels = 8,8,8,8,8,8", "movnet.epochs = 3",
                             "run.mode = HingeCPC_e2e", "data.seed = 2"})
    EXPECT_NE(config::from_text(change).encoder_digest(), base.encoder_digest()) << change;
}

TEST(Config, CanonicalIsSortedKeyValueLines) {
  const std::string text = config::from_text("").canonical();
  std::vector<std::string> keys;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    ASSERT_NE(line.find(" = "), std::string::npos) << line;
    keys.push_back(line.substr(0, line.find(" = ")));
    pos = nl + 1;
  }
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
}

TEST(Config, Perturbations) {
  EXPECT_EQ(config::parse_perturbations("all").size(), 25u);
  EXPECT_TRUE(config::parse_perturbations("none").empty());
  const auto p = config::parse_perturbations("gaussian_noise:1-3, shadow:5");
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[2].severity, 3);
  EXPECT_EQ(p[3].kind, seq::PerturbKind::kShadow);
  EXPECT_THROW(config::parse_perturbations("gaussian_noise:6"), ConfigError);
  EXPECT_THROW(config::parse_perturbations("gaussian_noise:3-1"), ConfigError);
  EXPECT_THROW(config::parse_perturbations("fog:1"), ConfigError);
  EXPECT_EQ(config::parse_perturbations("shadow").size(), 5u);
  EXPECT_THROW(config::parse_perturbations("shadow:x"), ConfigError);
}

TEST(Config, LoadsFromFile) {
  const auto dir = scratch_dir("config");
  std::ofstream(dir / "a.cfg") << "[run]\nid = fromfile\n[probe]\ntask = multitarget\naverage = per_sample\n";
  const auto c = config::load(dir / "a.cfg");
  EXPECT_EQ(c.run_id, "fromfile");
  EXPECT_EQ(c.task, probe::Task::kMultitarget);
  EXPECT_EQ(c.average, probe::AverageMode::kPerSample);
  std::ofstream(dir / "b.cfg") << "[run]\nid = ok\nbogus = 1\n";
  try {
    config::load(dir / "b.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b.cfg:3"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace iclp
