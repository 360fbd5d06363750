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


#include "iclp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "iclp/error.hpp"
#include "iclp/image.hpp"
#include "iclp/parallel.hpp"
#include "iclp/svg.hpp"

namespace iclp::pipeline {
namespace fs = std::filesystem;

namespace {

// Serialises log lines coming from worker threads.
class SafeLog {
 public:
  explicit SafeLog(const Log& log) : log_(log) {}
  void operator()(const std::string& msg) const {
    if (!log_) return;
    std::lock_guard<std::mutex> lock(mu_);
    log_(msg);
  }

 private:
  const Log& log_;
  mutable std::mutex mu_;
};

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

std::string plan_string(const EncoderPlan& p) {
  return "in=" + std::to_string(p.in_channels) + ";channels=" + join(p.channels) + ";pool=" + join(p.pool_after) +
         ";kernel=" + std::to_string(p.kernel);
}

EncoderPlan parse_plan(const std::string& s) {
  EncoderPlan p;
  std::stringstream ss(s);
  std::string field;
  try {
    while (std::getline(ss, field, ';')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw DataError("malformed plan field '" + field + "'");
      const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
      if (k == "in") {
        p.in_channels = std::stoul(v);
      } else if (k == "channels") {
        p.channels = parse_counts(v);
      } else if (k == "pool") {
        p.pool_after = parse_counts(v);
      } else if (k == "kernel") {
        p.kernel = std::stoul(v);
      } else {
        throw DataError("unknown plan field '" + k + "'");
      }
    }
  } catch (const std::invalid_argument&) {
    throw DataError("malformed encoder plan '" + s + "'");
  }
  p.validate();
  return p;
}

void put_encoder(io::Checkpoint& ck, const Encoder<float>& enc) {
  ck.put_string("meta/plan", plan_string(enc.plan()));
  for (std::size_t l = 0; l < enc.num_layers(); ++l) {
    ck.put("encoder/w" + std::to_string(l + 1), enc.weight(l));
    ck.put("encoder/b" + std::to_string(l + 1), enc.bias(l));
  }
}

Encoder<float> get_encoder(const io::Checkpoint& ck) {
  const EncoderPlan plan = parse_plan(ck.get_string("meta/plan"));
  std::vector<TensorF> w, b;
  for (std::size_t l = 0; l < kEncoderLayers; ++l) {
    w.push_back(ck.get_f32("encoder/w" + std::to_string(l + 1)));
    b.push_back(ck.get_f32("encoder/b" + std::to_string(l + 1)));
  }
  try {
    return Encoder<float>(plan, std::move(w), std::move(b));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint encoder: ") + e.what());
  }
}

std::string require_kind(const io::Checkpoint& ck) {
  if (!ck.has("meta/kind")) throw DataError("checkpoint has no meta/kind entry");
  return ck.get_string("meta/kind");
}

std::vector<std::vector<int>> label_sets(const std::vector<io::ImageItem>& items) {
  std::vector<std::vector<int>> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.labels);
  return out;
}

std::vector<int> first_labels(const std::vector<io::ImageItem>& items) {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.labels.at(0));
  return out;
}

std::vector<TensorF> images_of(const std::vector<io::ImageItem>& items) {
  std::vector<TensorF> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.image);
  return out;
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

// Result of one trained image pathway or MovNet.
struct TrainJob {
  std::string name;
  clapp::TrainMode mode = clapp::TrainMode::kClappLocal;
  std::uint64_t seed = 0;
  std::string run_id;
  fs::path checkpoint;  // final checkpoint; intermediate ones go next to it
  clapp::ImagePathway pathway;
  movnet::MovNet<float> movnet;
  std::vector<io::MetricRow> rows;
};

fs::path intermediate_path(const fs::path& final_path, std::size_t epoch) {
  fs::path p = final_path;
  p.replace_extension(".epoch" + std::to_string(epoch) + ".ckpt");
  return p;
}

void run_job(TrainJob& job, const config::RunConfig& cfg, const std::vector<TensorF>& images, const SafeLog& log) {
  Rng rng = pathway_rng(job.seed, job.name);
  const std::uint64_t digest = cfg.encoder_digest();
  auto due = [&](std::size_t epoch, std::size_t total) {
    return cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch < total && !job.checkpoint.empty();
  };
  if (is_movnet(job.name)) {
    const auto data = movnet::gen_motion_dataset(cfg.motion_train_per_class, cfg.motion_test_per_class, cfg.motion,
                                                 cfg.data.synthetic.seed);
    job.movnet = movnet::MovNet<float>(cfg.movnet_plan, rng);
    movnet::MovNetTrainConfig tc = cfg.movnet;
    tc.seed = job.seed;
    movnet::train_movnet(job.movnet, data.train, tc, [&](std::size_t epoch, double loss) {
      job.rows.push_back({job.run_id, "train", static_cast<long>(epoch), 0, "movnet_loss", loss, job.seed});
      if (due(epoch, tc.epochs)) {
        io::save_checkpoint(movnet_checkpoint(job.movnet, digest), intermediate_path(job.checkpoint, epoch));
      }
      log("[train] " + job.run_id + " epoch " + std::to_string(epoch) + "/" + std::to_string(tc.epochs) +
          " loss " + io::format_double(loss));
    });
    const auto ev = movnet::evaluate(job.movnet, data.test);
    const long last = static_cast<long>(tc.epochs);
    job.rows.push_back({job.run_id, "eval", last, 0, "disc_accuracy", ev.accuracy, job.seed});
    job.rows.push_back({job.run_id, "eval", last, 0, "speed_mae", ev.speed_mae, job.seed});
    log("[train] " + job.run_id + " held-out discrimination " + io::format_double(ev.accuracy) + "% speed MAE " +
        io::format_double(ev.speed_mae));
    return;
  }
  job.pathway = clapp::ImagePathway::create(job.name, pathway_operator(job.name), cfg.plan, cfg.train.max_offset, rng);
  clapp::TrainConfig tc = cfg.train;
  tc.mode = job.mode;
  tc.seed = job.seed;
  const std::size_t depth = job.pathway.encoder.num_layers();
  clapp::train(job.pathway, images, tc, [&](const clapp::EpochLoss& e) {
    std::string msg = "[train] " + job.run_id + " epoch " + std::to_string(e.epoch) + "/" + std::to_string(tc.epochs);
    for (std::size_t i = 0; i < e.layer_losses.size(); ++i) {
      const long layer = job.mode == clapp::TrainMode::kClappLocal ? static_cast<long>(i + 1) : static_cast<long>(depth);
      job.rows.push_back({job.run_id, "train", static_cast<long>(e.epoch), layer, "hinge_loss", e.layer_losses[i],
                          job.seed});
      msg += " " + io::format_double(e.layer_losses[i]).substr(0, 7);
    }
    log(msg);
    if (due(e.epoch, tc.epochs)) {
      io::save_checkpoint(pathway_checkpoint(job.pathway, job.mode, digest), intermediate_path(job.checkpoint, e.epoch));
    }
  });
}

fs::path ablation_checkpoint(const config::RunConfig& cfg, std::uint64_t seed, clapp::TrainMode mode,
                             const std::string& name) {
  const fs::path dir = cfg.out_dir / ("seed" + std::to_string(seed)) / clapp::train_mode_name(mode);
  fs::create_directories(dir);
  return dir / (safe_name(name) + ".ckpt");
}

void write_degradation(const fs::path& dir, const std::vector<DegradationEntry>& rows) {
  fs::create_directories(dir);
  std::ofstream out(dir / "degradation.csv", std::ios::trunc);
  out << "model,seed,kind,severity,accuracy\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.seed << ',' << r.row.kind << ',' << r.row.severity << ','
        << io::format_double(r.row.accuracy) << '\n';
  }
  if (!out) throw DataError("cannot write " + (dir / "degradation.csv").string());

  // one box per model over the perturbed settings, averaged across seeds
  std::vector<std::string> order;
  std::map<std::string, std::map<std::pair<std::string, int>, std::vector<double>>> acc;
  for (const auto& r : rows) {
    if (r.row.kind == "clean") continue;
    if (std::find(order.begin(), order.end(), r.model) == order.end()) order.push_back(r.model);
    acc[r.model][{r.row.kind, r.row.severity}].push_back(r.row.accuracy);
  }
  std::vector<svg::Box> boxes;
  for (const auto& m : order) {
    svg::Box b{m, {}};
    for (const auto& [key, vals] : acc[m]) b.values.push_back(probe::summarize(vals).mean);
    boxes.push_back(std::move(b));
  }
  svg::write(dir / "degradation.svg", svg::box_plot("Accuracy under perturbation", "top-1 accuracy (%)", boxes));
}

}  // namespace

bool is_movnet(const std::string& pathway) { return pathway.substr(0, pathway.find('#')) == "movnet"; }

ops::Operator pathway_operator(const std::string& pathway) {
  probe::fusion_rank(pathway);
  const std::string base = pathway.substr(0, pathway.find('#'));
  if (base == "movnet") throw ConfigError("movnet is not an image operator pathway");
  if (base == "plain") return ops::Operator::kIdentity;
  return ops::operator_from_name(base);
}

std::string checkpoint_filename(const std::string& pathway) { return safe_name(pathway) + ".ckpt"; }

Rng pathway_rng(std::uint64_t seed, const std::string& pathway) { return Rng(seed).fork(io::fnv1a(pathway)); }

movnet::ActionSpec action_spec(const config::RunConfig& cfg) {
  movnet::ActionSpec a;
  a.train_per_class = cfg.data.synthetic.train_per_class;
  a.test_per_class = cfg.data.synthetic.test_per_class;
  a.motion = cfg.motion;
  a.seed = cfg.data.synthetic.seed;
  return a;
}

io::ImageDataset load_dataset(const config::RunConfig& cfg) {
  if (cfg.data.kind == "folder") return io::load_image_folder(cfg.data.folder);
  if (cfg.data.kind == "action") return movnet::gen_action_dataset(action_spec(cfg));
  return io::gen_synthetic(cfg.data.synthetic);
}

// ---- checkpoints ----

io::Checkpoint pathway_checkpoint(const clapp::ImagePathway& p, clapp::TrainMode mode, std::uint64_t digest) {
  io::Checkpoint ck;
  ck.config_digest = digest;
  ck.put_string("meta/kind", "pathway");
  ck.put_string("meta/name", p.name);
  ck.put_string("meta/operator", ops::operator_name(p.op));
  ck.put_string("meta/mode", clapp::train_mode_name(mode));
  put_encoder(ck, p.encoder);
  for (std::size_t l = 0; l < p.heads.num_layers(); ++l)
    for (std::size_t d = 1; d <= p.heads.max_offset(); ++d)
      if (p.heads.has(l, d)) ck.put("heads/" + std::to_string(l + 1) + "/" + std::to_string(d), p.heads.weight(l, d));
  return ck;
}

clapp::ImagePathway pathway_from_checkpoint(const io::Checkpoint& ck) {
  if (require_kind(ck) != "pathway") throw DataError("checkpoint is not an image pathway");
  clapp::ImagePathway p;
  p.name = ck.get_string("meta/name");
  p.op = ops::operator_from_name(ck.get_string("meta/operator"));
  p.encoder = get_encoder(ck);
  if (p.encoder.plan().in_channels != ops::operator_channels(p.op)) {
    throw DataError("checkpoint '" + p.name + "': encoder input channels do not match its operator");
  }
  std::size_t max_offset = 0;
  for (const auto& n : ck.names_with_prefix("heads/")) {
    max_offset = std::max<std::size_t>(max_offset, std::stoul(n.substr(n.rfind('/') + 1)));
  }
  std::vector<std::vector<TensorF>> heads(p.encoder.num_layers());
  for (std::size_t l = 0; l < heads.size(); ++l)
    for (std::size_t d = 1; d <= max_offset; ++d) {
      const std::string key = "heads/" + std::to_string(l + 1) + "/" + std::to_string(d);
      heads[l].push_back(ck.get_f32(key));
    }
  p.heads = clapp::PredictionHeads<float>(max_offset, std::move(heads));
  return p;
}

io::Checkpoint movnet_checkpoint(const movnet::MovNet<float>& m, std::uint64_t digest) {
  io::Checkpoint ck;
  ck.config_digest = digest;
  ck.put_string("meta/kind", "movnet");
  ck.put_string("meta/name", "movnet");
  put_encoder(ck, m.encoder);
  ck.put("head/w_disc", m.w_disc);
  ck.put("head/b_disc", m.b_disc);
  ck.put("head/w_speed", m.w_speed);
  ck.put("head/b_speed", m.b_speed);
  return ck;
}

movnet::MovNet<float> movnet_from_checkpoint(const io::Checkpoint& ck) {
  if (require_kind(ck) != "movnet") throw DataError("checkpoint is not a MovNet");
  movnet::MovNet<float> m;
  m.encoder = get_encoder(ck);
  m.w_disc = ck.get_f32("head/w_disc");
  m.b_disc = ck.get_f32("head/b_disc");
  m.w_speed = ck.get_f32("head/w_speed");
  m.b_speed = ck.get_f32("head/b_speed");
  const Shape hs{1, m.encoder.output_dim()};
  if (m.w_disc.shape() != hs || m.w_speed.shape() != hs) throw DataError("MovNet head shapes do not match encoder");
  return m;
}

io::Checkpoint probe_checkpoint(const probe::LinearProbe& p, const std::vector<std::string>& pathways,
                                std::uint64_t digest) {
  io::Checkpoint ck;
  ck.config_digest = digest;
  ck.put_string("meta/kind", "probe");
  ck.put_string("meta/task", probe::task_name(p.task));
  std::string names;
  for (std::size_t i = 0; i < pathways.size(); ++i) names += (i ? "," : "") + pathways[i];
  ck.put_string("meta/pathways", names);
  ck.put("probe/dropout", TensorD({1}, std::vector<double>{p.dropout}));
  ck.put("probe/w1", p.w1);
  ck.put("probe/b1", p.b1);
  ck.put("probe/w2", p.w2);
  ck.put("probe/b2", p.b2);
  if (!p.mean.empty()) {
    ck.put("probe/mean", p.mean);
    ck.put("probe/inv_std", p.inv_std);
  }
  return ck;
}

probe::LinearProbe probe_from_checkpoint(const io::Checkpoint& ck, std::vector<std::string>* pathways) {
  if (require_kind(ck) != "probe") throw DataError("checkpoint is not a probe");
  probe::LinearProbe p;
  p.task = probe::task_from_name(ck.get_string("meta/task"));
  p.dropout = ck.get_f64("probe/dropout")[0];
  p.w1 = ck.get_f32("probe/w1");
  p.b1 = ck.get_f32("probe/b1");
  p.w2 = ck.get_f32("probe/w2");
  p.b2 = ck.get_f32("probe/b2");
  if (ck.has("probe/mean")) {
    p.mean = ck.get_f32("probe/mean");
    p.inv_std = ck.get_f32("probe/inv_std");
  }
  if (pathways) {
    pathways->clear();
    std::stringstream ss(ck.get_string("meta/pathways"));
    std::string item;
    while (std::getline(ss, item, ',')) pathways->push_back(item);
  }
  return p;
}

std::uint64_t FrozenModel::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (const auto& p : pathways) mix(p.encoder.checksum());
  for (const auto& m : movnets) mix(m.checksum());
  return h;
}

FrozenModel load_model(const std::vector<fs::path>& checkpoints, std::uint64_t digest, const Log& log) {
  if (checkpoints.empty()) throw ConfigError("no checkpoints given");
  FrozenModel m;
  for (const auto& path : checkpoints) {
    std::string warning;
    const io::Checkpoint ck = io::load_checkpoint(path, digest, &warning);
    if (!warning.empty() && log) log("warning: " + warning);
    const std::string kind = require_kind(ck);
    if (kind == "pathway") {
      m.pathways.push_back(pathway_from_checkpoint(ck));
      m.names.push_back(m.pathways.back().name);
    } else if (kind == "movnet") {
      if (!m.movnets.empty()) throw ConfigError("more than one MovNet checkpoint given");
      m.movnets.push_back(movnet_from_checkpoint(ck));
      m.names.push_back("movnet");
    } else {
      throw DataError(path.string() + ": checkpoint of kind '" + kind + "' is not an encoder");
    }
  }
  std::sort(m.pathways.begin(), m.pathways.end(),
            [](const auto& a, const auto& b) { return probe::fusion_rank(a.name) < probe::fusion_rank(b.name); });
  m.names = probe::sorted_fusion_order(m.names);
  return m;
}

probe::FeatureSet model_features(const FrozenModel& m, const std::vector<io::ImageItem>& items,
                                 const seq::PatchGeometry& geom) {
  const std::vector<TensorF> images = images_of(items);
  std::vector<TensorF> blocks;
  std::size_t pi = 0;
  for (const auto& name : m.names) {
    if (is_movnet(name)) {
      std::vector<std::vector<TensorF>> clips;
      for (const auto& it : items) {
        if (it.frames.size() < 2) throw DataError("movnet features need clip items; dataset item has no frames");
        clips.push_back(it.frames);
      }
      blocks.push_back(movnet::movnet_features(m.movnets.at(0), clips));
    } else {
      blocks.push_back(probe::pathway_features(m.pathways.at(pi++), images, geom));
    }
  }
  return probe::fuse(m.names, blocks);
}

probe::FeatureSet model_features(const FrozenModel& m, const std::vector<TensorF>& images,
                                 const seq::PatchGeometry& geom) {
  if (!m.movnets.empty()) throw DataError("movnet features need clip items, got still images");
  std::vector<TensorF> blocks;
  for (const auto& p : m.pathways) blocks.push_back(probe::pathway_features(p, images, geom));
  return probe::fuse(m.names, blocks);
}

// ---- commands ----

void gen_data(const config::RunConfig& cfg, const fs::path& out_dir, const Log& log) {
  if (cfg.data.kind == "folder") throw ConfigError("gen-data needs data.source = synthetic or action");
  const io::ImageDataset ds = load_dataset(cfg);
  io::save_image_folder(ds, out_dir);
  if (log) {
    log("[gen-data] wrote " + std::to_string(ds.train.size()) + " train / " + std::to_string(ds.test.size()) +
        " test items to " + out_dir.string());
  }
}

void decompose(const fs::path& image, const std::string& op, const fs::path& out_png) {
  const ops::Operator o = op == "plain" ? ops::Operator::kIdentity : ops::operator_from_name(op);
  const TensorF rgb = io::read_image(image);
  const TensorF x = ops::apply_operator(o, rgb);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), gap = 2;
  const std::size_t cols = std::min<std::size_t>(c, 7), rows = (c + cols - 1) / cols;
  TensorF grid({1, rows * (h + gap) - gap, cols * (w + gap) - gap}, 1.0f);
  for (std::size_t k = 0; k < c; ++k) {
    float lo = x.at(k, 0, 0), hi = lo;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        lo = std::min(lo, x.at(k, y, xx));
        hi = std::max(hi, x.at(k, y, xx));
      }
    const float scale = hi > lo ? 1.0f / (hi - lo) : 0.0f;
    const std::size_t gy = (k / cols) * (h + gap), gx = (k % cols) * (w + gap);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) grid.at(0, gy + y, gx + xx) = (x.at(k, y, xx) - lo) * scale;
  }
  io::write_image(out_png, grid);
}

TrainResult train(const config::RunConfig& cfg, const Log& log_fn) {
  cfg.validate();
  const SafeLog log(log_fn);
  const bool needs_images = std::any_of(cfg.pathways.begin(), cfg.pathways.end(),
                                        [](const std::string& p) { return !is_movnet(p); });
  std::vector<TensorF> images;
  if (needs_images) images = load_dataset(cfg).train_images();
  std::vector<TrainJob> jobs;
  for (const auto& name : cfg.pathways) {
    TrainJob j;
    j.name = name;
    j.mode = cfg.mode;
    j.seed = cfg.seed;
    j.run_id = cfg.run_id + "/" + name;
    j.checkpoint = cfg.out_dir / checkpoint_filename(name);
    jobs.push_back(std::move(j));
  }
  fs::create_directories(cfg.out_dir);
  log("[train] " + std::to_string(jobs.size()) + " pathway(s) on " + std::to_string(worker_count(jobs.size())) +
      " worker(s)");
  parallel_for(jobs.size(), [&](std::size_t i) { run_job(jobs[i], cfg, images, log); });

  TrainResult res;
  fs::create_directories(cfg.out_dir);
  const std::uint64_t digest = cfg.encoder_digest();
  std::vector<io::MetricRow> rows;
  for (const auto& j : jobs) {
    io::save_checkpoint(is_movnet(j.name) ? movnet_checkpoint(j.movnet, digest)
                                          : pathway_checkpoint(j.pathway, j.mode, digest),
                        j.checkpoint);
    res.checkpoints[j.name] = j.checkpoint;
    rows.insert(rows.end(), j.rows.begin(), j.rows.end());
  }
  res.metrics = cfg.out_dir / "metrics.csv";
  io::write_metrics(res.metrics, rows, false);
  return res;
}

void write_report(const fs::path& path, const std::vector<ReportRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "model,metric,mean,std,n\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.metric << ',' << io::format_double(r.summary.mean) << ','
        << io::format_double(r.summary.std) << ',' << r.summary.n << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

ProbeResult probe_checkpoints(const config::RunConfig& cfg, const std::vector<fs::path>& checkpoints,
                              const Log& log_fn) {
  cfg.validate();
  for (const auto& p : checkpoints)
    if (!fs::exists(p)) throw DataError("missing checkpoint " + p.string());
  const SafeLog log(log_fn);
  const FrozenModel model = load_model(checkpoints, cfg.encoder_digest(), log_fn);
  const io::ImageDataset ds = load_dataset(cfg);
  const std::uint64_t before = model.checksum();
  const probe::FeatureSet train_fs = model_features(model, ds.train, cfg.train.patch);
  const probe::FeatureSet test_fs = model_features(model, ds.test, cfg.train.patch);
  const auto train_labels = label_sets(ds.train);
  const auto test_sets = label_sets(ds.test);

  std::map<std::string, std::vector<double>> values;
  std::vector<std::string> order;
  auto record = [&](const std::string& metric, double v) {
    if (!values.count(metric)) order.push_back(metric);
    values[metric].push_back(v);
  };
  std::vector<io::MetricRow> rows;
  ProbeResult res;
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    const std::uint64_t seed = cfg.seeds[si];
    probe::ProbeConfig pc = cfg.probe;
    pc.seed = seed;
    const auto pr = probe::train_probe(train_fs.values, train_labels, ds.num_classes(), cfg.task, pc,
                                       [&](std::size_t epoch, double loss) {
                                         rows.push_back({cfg.run_id, "probe_train", static_cast<long>(epoch), 0,
                                                         "probe_loss", loss, seed});
                                       });
    const long last = static_cast<long>(pc.epochs);
    std::vector<std::pair<std::string, double>> metrics;
    if (cfg.task == probe::Task::kMulticlass) {
      const auto r = probe::eval_multiclass(pr, test_fs.values, first_labels(ds.test), cfg.topk);
      metrics.push_back({"top1", r.top1});
      metrics.push_back({"top" + std::to_string(cfg.topk), r.topk});
      for (std::size_t c = 0; c < r.per_class.size(); ++c) metrics.push_back({"acc:" + ds.class_names[c], r.per_class[c]});
    } else {
      const auto r = probe::eval_multitarget(pr, test_fs.values, test_sets, cfg.threshold, cfg.average);
      metrics.push_back({"multi_target", r.multi_target});
      metrics.push_back({"average", r.average});
      for (std::size_t c = 0; c < r.per_class.size(); ++c) metrics.push_back({"acc:" + ds.class_names[c], r.per_class[c]});
    }
    for (const auto& [k, v] : metrics) {
      rows.push_back({cfg.run_id, "probe_eval", last, 0, k, v, seed});
      record(k, v);
    }
    log("[probe] seed " + std::to_string(seed) + " " + metrics[0].first + " = " + io::format_double(metrics[0].second));
    if (si == 0) {
      res.probe_checkpoint = cfg.out_dir / "probe.ckpt";
      fs::create_directories(cfg.out_dir);
      io::save_checkpoint(probe_checkpoint(pr, model.names, cfg.digest()), res.probe_checkpoint);
    }
  }
  if (model.checksum() != before) throw NumericError("encoder parameters changed during probe training");
  std::string name;
  for (std::size_t i = 0; i < model.names.size(); ++i) name += (i ? "+" : "") + model.names[i];
  for (const auto& k : order) res.report.push_back({name, k, probe::summarize(values[k])});
  io::write_metrics(cfg.out_dir / "probe_metrics.csv", rows, false);
  write_report(cfg.out_dir / "report.csv", res.report);
  return res;
}

PerturbResult perturb(const config::RunConfig& cfg, const std::vector<ModelSpec>& models, const Log& log_fn) {
  cfg.validate();
  if (models.empty()) throw ConfigError("perturb needs at least one model");
  if (cfg.task != probe::Task::kMulticlass) throw ConfigError("perturbation evaluation supports multiclass probes");
  const SafeLog log(log_fn);
  const std::uint64_t digest = cfg.encoder_digest();
  std::vector<FrozenModel> frozen;
  for (const auto& m : models) {
    for (const auto& p : m.checkpoints)
      if (!fs::exists(p)) throw DataError("missing checkpoint " + p.string());
    frozen.push_back(load_model(m.checkpoints, digest, log_fn));
    if (!frozen.back().movnets.empty()) throw ConfigError("perturbation evaluation works on image pathways only");
  }
  const io::ImageDataset ds = load_dataset(cfg);
  const auto specs = cfg.perturbations.empty() ? probe::all_perturbations() : cfg.perturbations;
  const std::vector<TensorF> test = ds.test_images();
  const std::vector<int> labels = first_labels(ds.test);
  PerturbResult res;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto train_fs = model_features(frozen[mi], ds.train_images(), cfg.train.patch);
    std::vector<probe::LinearProbe> probes;
    for (std::uint64_t seed : cfg.seeds) {
      probe::ProbeConfig pc = cfg.probe;
      pc.seed = seed;
      probes.push_back(probe::train_probe(train_fs.values, label_sets(ds.train), ds.num_classes(), cfg.task, pc));
    }
    auto eval_all = [&](const std::vector<TensorF>& imgs, const std::string& kind, int severity) {
      const auto fs = model_features(frozen[mi], imgs, cfg.train.patch);
      for (std::size_t si = 0; si < probes.size(); ++si) {
        const double acc = probe::eval_multiclass(probes[si], fs.values, labels, 1).top1;
        res.rows.push_back({models[mi].name, cfg.seeds[si], {kind, severity, acc}});
      }
    };
    eval_all(test, "clean", 0);
    for (const auto& spec : specs) {
      eval_all(probe::perturbed_images(test, spec, cfg.data.synthetic.seed), seq::perturb_kind_name(spec.kind),
               spec.severity);
    }
    log("[perturb] " + models[mi].name + " done");
  }
  write_degradation(cfg.out_dir, res.rows);
  return res;
}

AblationResult ablate(const config::RunConfig& cfg, const Log& log_fn) {
  cfg.validate();
  if (cfg.task != probe::Task::kMulticlass) throw ConfigError("ablation supports multiclass probes");
  const SafeLog log(log_fn);
  const io::ImageDataset ds = load_dataset(cfg);
  const std::vector<TensorF> train_images = ds.train_images();
  const std::vector<TensorF> test_images = ds.test_images();
  const std::vector<int> test_labels = first_labels(ds.test);
  const auto train_labels = label_sets(ds.train);

  const std::vector<std::string> names = {"plain", "plain#2", "plain#3", "lbp", "rgnorm", "dtcwt"};
  const bool hinge = cfg.compare_hingecpc && cfg.mode == clapp::TrainMode::kClappLocal;
  std::vector<TrainJob> jobs;
  for (std::uint64_t seed : cfg.seeds) {
    for (const auto& n : names) {
      TrainJob j;
      j.name = n;
      j.mode = cfg.mode;
      j.seed = seed;
      j.run_id = cfg.run_id + "/" + n + "/" + clapp::train_mode_name(cfg.mode);
      j.checkpoint = ablation_checkpoint(cfg, seed, j.mode, n);
      jobs.push_back(std::move(j));
    }
    if (hinge) {
      for (const auto& n : {"lbp", "rgnorm", "dtcwt"}) {
        TrainJob j;
        j.name = n;
        j.mode = clapp::TrainMode::kHingeCpcE2e;
        j.seed = seed;
        j.run_id = cfg.run_id + "/" + n + "/" + clapp::train_mode_name(j.mode);
        j.checkpoint = ablation_checkpoint(cfg, seed, j.mode, n);
        jobs.push_back(std::move(j));
      }
    }
  }
  log("[ablate] " + std::to_string(jobs.size()) + " training jobs on " + std::to_string(worker_count(jobs.size())) +
      " worker(s)");
  parallel_for(jobs.size(), [&](std::size_t i) { run_job(jobs[i], cfg, train_images, log); });

  struct ModelDef {
    std::string name;
    clapp::TrainMode mode;
    std::vector<std::string> pathways;
  };
  std::vector<ModelDef> defs = {{kSinglePlain, cfg.mode, {"plain"}},
                                {kThreePlain, cfg.mode, {"plain", "plain#2", "plain#3"}},
                                {kDecomposed, cfg.mode, {"lbp", "rgnorm", "dtcwt"}}};
  if (hinge) defs.push_back({kDecomposedHinge, clapp::TrainMode::kHingeCpcE2e, {"lbp", "rgnorm", "dtcwt"}});

  AblationResult res;
  std::vector<io::MetricRow> rows;
  for (const auto& j : jobs) rows.insert(rows.end(), j.rows.begin(), j.rows.end());
  const auto specs = cfg.perturbations;
  fs::create_directories(cfg.out_dir);
  const std::uint64_t digest = cfg.encoder_digest();
  for (std::uint64_t seed : cfg.seeds) {
    auto job_of = [&](const std::string& n, clapp::TrainMode mode) -> const TrainJob& {
      for (const auto& j : jobs)
        if (j.seed == seed && j.name == n && j.mode == mode) return j;
      throw ConfigError("ablation job missing for " + n);
    };
    for (const auto& j : jobs) {
      if (j.seed == seed) io::save_checkpoint(pathway_checkpoint(j.pathway, j.mode, digest), j.checkpoint);
    }
    auto features = [&](const std::vector<TensorF>& imgs, std::map<std::pair<std::string, int>, TensorF>& cache,
                        const ModelDef& d) {
      std::vector<TensorF> blocks;
      for (const auto& n : d.pathways) {
        const auto key = std::make_pair(n, static_cast<int>(d.mode));
        if (!cache.count(key)) cache[key] = probe::pathway_features(job_of(n, d.mode).pathway, imgs, cfg.train.patch);
        blocks.push_back(cache[key]);
      }
      return probe::fuse(d.pathways, blocks).values;
    };
    std::map<std::pair<std::string, int>, TensorF> train_cache, test_cache;
    std::vector<probe::LinearProbe> probes;
    for (const auto& d : defs) {
      probe::ProbeConfig pc = cfg.probe;
      pc.seed = seed;
      probes.push_back(probe::train_probe(features(train_images, train_cache, d), train_labels, ds.num_classes(),
                                          cfg.task, pc));
      const double acc = probe::eval_multiclass(probes.back(), features(test_images, test_cache, d), test_labels, 1).top1;
      res.top1[d.name].push_back(acc);
      rows.push_back({cfg.run_id + "/" + d.name, "probe_eval", static_cast<long>(pc.epochs), 0, "top1", acc, seed});
      log("[ablate] seed " + std::to_string(seed) + " " + d.name + " top-1 " + io::format_double(acc).substr(0, 6));
      if (!specs.empty()) res.degradation.push_back({d.name, seed, {"clean", 0, acc}});
    }
    for (const auto& spec : specs) {
      const auto imgs = probe::perturbed_images(test_images, spec, cfg.data.synthetic.seed);
      std::map<std::pair<std::string, int>, TensorF> cache;
      for (std::size_t di = 0; di < defs.size(); ++di) {
        const double acc = probe::eval_multiclass(probes[di], features(imgs, cache, defs[di]), test_labels, 1).top1;
        res.degradation.push_back({defs[di].name, seed, {seq::perturb_kind_name(spec.kind), spec.severity, acc}});
      }
      log("[ablate] seed " + std::to_string(seed) + " " + seq::perturb_kind_name(spec.kind) + ":" +
          std::to_string(spec.severity) + " evaluated");
    }
  }

  // report: accuracy and the difference against the single plain encoder
  std::vector<svg::Bar> bars;
  const auto& base = res.top1.at(kSinglePlain);
  for (const auto& d : defs) {
    const auto& acc = res.top1.at(d.name);
    res.report.push_back({d.name, "top1", probe::summarize(acc)});
    std::vector<double> delta;
    for (std::size_t i = 0; i < acc.size(); ++i) delta.push_back(acc[i] - base[i]);
    res.report.push_back({d.name, "delta_vs_single_plain", probe::summarize(delta)});
    const auto s = probe::summarize(acc);
    bars.push_back({d.name, s.mean, s.std});
  }
  write_report(cfg.out_dir / "ablation.csv", res.report);
  svg::write(cfg.out_dir / "ablation.svg", svg::bar_chart("Probe accuracy by encoder set", "top-1 accuracy (%)", bars));
  io::write_metrics(cfg.out_dir / "metrics.csv", rows, false);
  if (!specs.empty()) write_degradation(cfg.out_dir, res.degradation);
  return res;
}

std::vector<fs::path> plot(const fs::path& metrics_csv, const fs::path& out_dir) {
  const auto rows = io::read_metrics(metrics_csv);
  std::vector<std::string> runs;
  std::map<std::string, std::map<std::string, svg::Series>> series;
  for (const auto& r : rows) {
    if (r.phase != "train" && r.phase != "probe_train") continue;
    if (std::find(runs.begin(), runs.end(), r.run_id) == runs.end()) runs.push_back(r.run_id);
    const std::string key = r.layer > 0 ? "layer " + std::to_string(r.layer) : r.metric;
    auto& s = series[r.run_id][key];
    s.name = key;
    s.x.push_back(static_cast<double>(r.epoch));
    s.y.push_back(r.value);
  }
  if (runs.empty()) throw DataError(metrics_csv.string() + ": no training rows to plot");
  std::vector<fs::path> written;
  for (const auto& run : runs) {
    std::vector<svg::Series> ss;
    for (auto& [k, s] : series[run]) ss.push_back(s);
    const fs::path out = out_dir / (safe_name(run) + ".svg");
    svg::write(out, svg::line_chart(run, "epoch", "loss", ss));
    written.push_back(out);
  }
  return written;
}

}  // namespace iclp::pipeline
