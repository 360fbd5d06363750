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
#include <iterator>

#include "iclp/error.hpp"
#include "iclp/pipeline.hpp"
#include "test_util.hpp"

namespace iclp {
namespace {

namespace fs = std::filesystem;

config::RunConfig tiny_config(const fs::path& out, const std::string& extra = "") {
  return config::from_text("[run]\nid = tiny\nout_dir = " + out.string() +
                           "\npathways = plain, lbp\n"
                           "[data]\nnum_classes = 2\ntrain_per_class = 3\ntest_per_class = 2\nsize = 40\n"
                           "translation = 4\n"
                           "[encoder]\nchannels = 4,4,4,4,4,4\n"
                           "[train]\nepochs = 2\nbatch_size = 4\nstride = 12\n"
                           "[probe]\nepochs = 3\nhidden = 8\n" +
                           extra);
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Pipeline, PathwayNamesAndStreams) {
  EXPECT_EQ(pipeline::pathway_operator("plain#3"), ops::Operator::kIdentity);
  EXPECT_EQ(pipeline::pathway_operator("dtcwt"), ops::Operator::kDtcwt);
  EXPECT_TRUE(pipeline::is_movnet("movnet"));
  EXPECT_FALSE(pipeline::is_movnet("plain"));
  EXPECT_EQ(pipeline::checkpoint_filename("plain#2"), pipeline::checkpoint_filename("plain#2"));
  EXPECT_NE(pipeline::checkpoint_filename("plain#2").find(".ckpt"), std::string::npos);
  Rng a = pipeline::pathway_rng(1, "lbp"), b = pipeline::pathway_rng(1, "lbp"), c = pipeline::pathway_rng(1, "plain");
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(pipeline::pathway_rng(1, "lbp").next_u64(), c.next_u64());
}

TEST(Pipeline, CheckpointConvertersRoundTrip) {
  EncoderPlan plan;
  plan.channels = {4, 4, 4, 4, 4, 4};
  Rng rng(1);
  const auto p = clapp::ImagePathway::create("rgnorm", ops::Operator::kRg, plan, 3, rng);
  const auto ck = pipeline::pathway_checkpoint(p, clapp::TrainMode::kHingeCpcE2e, 42);
  EXPECT_EQ(ck.config_digest, 42u);
  const auto q = pipeline::pathway_from_checkpoint(io::Checkpoint::deserialize(ck.serialize()));
  EXPECT_EQ(q.name, "rgnorm");
  EXPECT_EQ(q.op, ops::Operator::kRg);
  EXPECT_EQ(q.encoder.checksum(), p.encoder.checksum());
  EXPECT_EQ(q.encoder.plan().channels, plan.channels);

  EncoderPlan mp = plan;
  const movnet::MovNet<float> m(mp, rng);
  const auto m2 = pipeline::movnet_from_checkpoint(pipeline::movnet_checkpoint(m, 7));
  EXPECT_EQ(m2.checksum(), m.checksum());

  const probe::LinearProbe pr(8, 5, 3, probe::Task::kMultitarget, 0.25, rng);
  std::vector<std::string> names;
  const auto pr2 = pipeline::probe_from_checkpoint(pipeline::probe_checkpoint(pr, {"plain", "lbp"}, 9), &names);
  EXPECT_EQ(names, (std::vector<std::string>{"plain", "lbp"}));
  EXPECT_EQ(pr2.task, probe::Task::kMultitarget);
  EXPECT_EQ(pr2.w1, pr.w1);
  EXPECT_EQ(pr2.b2, pr.b2);
  EXPECT_EQ(pr2.dropout, 0.25);

  EXPECT_THROW(pipeline::pathway_from_checkpoint(pipeline::movnet_checkpoint(m, 7)), DataError);
}

TEST(Pipeline, TrainIsDeterministicAndProbeFreezesEncoders) {
  const auto dir = scratch_dir("pipeline_train");
  const auto cfg = tiny_config(dir / "a");
  const auto res = pipeline::train(cfg);
  ASSERT_EQ(res.checkpoints.size(), 2u);
  const auto rows = io::read_metrics(res.metrics);
  std::size_t hinge = 0;
  for (const auto& r : rows) hinge += r.metric == "hinge_loss";
  EXPECT_EQ(hinge, 2u * 2u * 6u);  // pathways x epochs x layers

  auto again = cfg;
  again.out_dir = dir / "b";
  const auto res2 = pipeline::train(again);
  for (const auto& [name, path] : res.checkpoints) EXPECT_EQ(bytes_of(path), bytes_of(res2.checkpoints.at(name)));
  EXPECT_EQ(bytes_of(res.metrics), bytes_of(res2.metrics));

  std::vector<fs::path> ckpts;
  for (const auto& [name, path] : res.checkpoints) ckpts.push_back(path);
  const auto before = pipeline::load_model(ckpts, cfg.encoder_digest(), {}).checksum();
  const auto pr = pipeline::probe_checkpoints(cfg, ckpts);
  EXPECT_TRUE(fs::exists(pr.probe_checkpoint));
  EXPECT_TRUE(fs::exists(cfg.out_dir / "report.csv"));
  EXPECT_EQ(pipeline::load_model(ckpts, cfg.encoder_digest(), {}).checksum(), before);
  bool top1 = false;
  for (const auto& r : pr.report) top1 = top1 || r.metric == "top1";
  EXPECT_TRUE(top1);

  std::vector<std::string> warnings;
  auto other = cfg;
  other.train.adam.lr = 1e-3;
  pipeline::load_model(ckpts, other.encoder_digest(), [&](const std::string& s) { warnings.push_back(s); });
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(Pipeline, IntermediateCheckpoints) {
  const auto dir = scratch_dir("pipeline_every");
  auto c = tiny_config(dir);
  c.pathways = {"lbp"};
  c.train.epochs = 3;
  c.checkpoint_every = 1;
  pipeline::train(c);
  EXPECT_TRUE(fs::exists(dir / "lbp.epoch1.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "lbp.epoch2.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "lbp.epoch3.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "lbp.ckpt"));
  const auto first = pipeline::pathway_from_checkpoint(io::load_checkpoint(dir / "lbp.epoch1.ckpt"));
  const auto last = pipeline::pathway_from_checkpoint(io::load_checkpoint(dir / "lbp.ckpt"));
  EXPECT_NE(first.encoder.checksum(), last.encoder.checksum());
}

TEST(Pipeline, ProbeNamesMissingCheckpoint) {
  const auto dir = scratch_dir("pipeline_missing");
  const auto cfg = tiny_config(dir);
  try {
    pipeline::probe_checkpoints(cfg, {dir / "nope.ckpt"});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.ckpt"), std::string::npos);
  }
}

TEST(Pipeline, DecomposeWritesTiledChannels) {
  const auto dir = scratch_dir("pipeline_decompose");
  Rng rng(3);
  io::write_image(dir / "in.png", random_tensor<float>({3, 16, 16}, rng, 0, 1));
  pipeline::decompose(dir / "in.png", "dtcwt", dir / "dtcwt.png");
  // 21 half-resolution maps, 7 per row with a 2 pixel gap
  const TensorF out = io::read_image(dir / "dtcwt.png");
  EXPECT_EQ(out.dim(1), 3u * 8 + 2 * 2);
  EXPECT_EQ(out.dim(2), 7u * 8 + 6 * 2);
  EXPECT_THROW(pipeline::decompose(dir / "in.png", "sobel", dir / "x.png"), ConfigError);
  EXPECT_THROW(pipeline::decompose(dir / "missing.png", "lbp", dir / "x.png"), DataError);
}

TEST(Pipeline, GenDataRoundTrips) {
  const auto dir = scratch_dir("pipeline_gen");
  const auto cfg = tiny_config(dir);
  pipeline::gen_data(cfg, dir / "data");
  const auto ds = io::load_image_folder(dir / "data");
  EXPECT_EQ(ds.train.size(), 6u);
  EXPECT_EQ(ds.test.size(), 4u);
  const auto mem = pipeline::load_dataset(cfg);
  // 8-bit quantisation is the only difference
  for (std::size_t i = 0; i < mem.train[0].image.size(); ++i)
    EXPECT_NEAR(ds.train[0].image[i], mem.train[0].image[i], 0.5 / 255 + 1e-6);
}

}  // namespace
}  // namespace iclp
