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


#include "iclp/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "iclp/error.hpp"

namespace iclp::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Values {
 public:
  explicit Values(const std::map<std::string, std::string>& kv) {
    for (const auto& d : key_docs()) values_[d.key] = d.fallback;
    for (const auto& [k, v] : kv) values_[k] = v;
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  double num(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
  }

  std::uint64_t count(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      if (!v.empty() && v[0] != '-') {
        const unsigned long long n = std::stoull(v, &used);
        if (used == v.size()) return n;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": expected true or false, got '" + v + "'");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(str(key))) {
      try {
        std::size_t used = 0;
        const unsigned long n = std::stoul(item, &used);
        if (used == item.size() && item[0] != '-') {
          out.push_back(n);
          continue;
        }
      } catch (const std::exception&) {
      }
      throw ConfigError("config key " + key + ": '" + item + "' is not a non-negative integer");
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace

const std::vector<KeyDoc>& key_docs() {
  static const std::vector<KeyDoc> docs = {
      {"run.id", "run", "run identifier written to every metrics row", false},
      {"run.seed", "0", "seed for initialisation, sampling and probes", false},
      {"run.seeds", "", "comma list of seeds for repeated runs (mean and std); empty uses run.seed", false},
      {"run.out_dir", "runs/run", "directory for checkpoints, metrics and reports", false},
      {"run.pathways", "plain", "comma list from plain, lbp, rgnorm, dtcwt, movnet; replicas as plain#2", false},
      {"run.mode", "CLAPP_local", "CLAPP_local (layer-local hinge loss) or HingeCPC_e2e (last layer, end-to-end)",
       false},
      {"data.source", "synthetic", "synthetic (shape images), action (sprite clips) or folder", false},
      {"data.folder", "", "dataset root with classes.txt, train.csv, test.csv", false},
      {"data.num_classes", "8", "synthetic shape classes (1-8)", false},
      {"data.train_per_class", "200", "synthetic training images per class", false},
      {"data.test_per_class", "50", "synthetic test images per class", false},
      {"data.size", "64", "synthetic image side in pixels", false},
      {"data.rotation_min", "0", "synthetic rotation range start, degrees", false},
      {"data.rotation_max", "360", "synthetic rotation range end, degrees", false},
      {"data.illumination_min", "0.3", "smallest illumination scale", false},
      {"data.illumination_max", "2.0", "largest illumination scale", false},
      {"data.translation", "8", "maximum shape translation in pixels", false},
      {"data.texture", "true", "draw shapes with a phase-shifted grating texture", false},
      {"data.background_chromaticity", "true", "random background chromaticity", false},
      {"data.seed", "0", "seed of the synthetic generator", false},
      {"encoder.channels", "64,64,128,128,256,256", "output channels of the six conv layers", true},
      {"encoder.pool_after", "2,4", "1-based layers (1-5) whose output is 2x2 max-pooled", false},
      {"train.lr", "1e-5", "Adam learning rate", true},
      {"train.weight_decay", "5e-6", "decoupled weight decay", true},
      {"train.beta1", "0.9", "Adam beta1", true},
      {"train.beta2", "0.999", "Adam beta2", true},
      {"train.eps", "1e-8", "Adam epsilon", true},
      {"train.batch_size", "64", "images per mini-batch", true},
      {"train.epochs", "200", "training epochs per encoder", false},
      {"train.checkpoint_every", "0", "also write <pathway>.epoch<N>.ckpt every N epochs; 0 writes only the final one",
       false},
      {"train.patch_size", "16", "patch side in pixels", true},
      {"train.stride", "8", "patch stride in pixels", true},
      {"train.max_offset", "5", "largest prediction offset (patches into the future)", true},
      {"train.negatives", "1", "negatives per positive", false},
      {"train.augment", "true", "random crop and flip before patching", false},
      {"train.augment_min_area", "0.8", "smallest crop area fraction", false},
      {"train.augment_flip", "0.5", "horizontal flip probability", false},
      {"probe.task", "multiclass", "multiclass (softmax) or multitarget (per-class sigmoid)", false},
      {"probe.hidden", "256", "hidden width of the two-layer probe", false},
      {"probe.dropout", "0.5", "dropout between the probe layers", true},
      {"probe.epochs", "100", "probe training epochs", false},
      {"probe.lr", "1e-3", "probe Adam learning rate", false},
      {"probe.weight_decay", "0", "probe weight decay", false},
      {"probe.batch_size", "64", "probe mini-batch size", false},
      {"probe.standardize", "true", "z-score probe inputs with training statistics", false},
      {"probe.topk", "5", "k of the top-k accuracy", false},
      {"probe.average", "per_class", "multitarget average accuracy: per_class (binary accuracy per class) or per_sample (Jaccard per sample)", false},
      {"probe.threshold", "0.5", "multitarget decision threshold", false},
      {"eval.perturbations", "none", "none, all, or kind:severity list, e.g. gaussian_noise:1-5,shadow:3", false},
      {"eval.compare_hingecpc", "false", "ablation also trains the decomposed encoders with HingeCPC_e2e", false},
      {"movnet.frames", "16", "frames per motion clip", false},
      {"movnet.crop", "64", "crop side in source pixels", false},
      {"movnet.working_size", "64", "side the crops are resized to", false},
      {"movnet.v_max", "8", "largest motion speed, source pixels per frame", false},
      {"movnet.scene_v_min", "1", "smallest sprite speed in scene-motion clips", false},
      {"movnet.sprite_radius", "7", "sprite radius in source pixels", false},
      {"movnet.channels", "", "MovNet conv channels; empty uses encoder.channels", false},
      {"movnet.train_per_class", "200", "synthetic training clips per motion class", false},
      {"movnet.test_per_class", "50", "synthetic held-out clips per motion class", false},
      {"movnet.batch_size", "16", "clips per mini-batch", true},
      {"movnet.epochs", "50", "MovNet training epochs", false},
      {"movnet.lr", "1e-3", "MovNet Adam learning rate", false},
      {"movnet.weight_decay", "5e-6", "MovNet weight decay", false},
      {"movnet.cosine", "true", "half-cosine learning-rate decay", false},
  };
  return docs;
}

std::string describe_keys() {
  std::ostringstream os;
  os << "Config keys (file format: [section] headers, then key = value; # starts a comment).\n"
     << "Defaults marked (reference) follow the reference training setup; (local) are choices of this tool.\n\n";
  std::string section;
  for (const auto& d : key_docs()) {
    const std::string key = d.key;
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      os << "[" << sec << "]\n";
      section = sec;
    }
    std::string def = d.fallback;
    if (def.empty()) def = "\"\"";
    os << "  " << key.substr(key.find('.') + 1) << " = " << def << "  " << (d.reference_default ? "(reference)" : "(local)")
       << "\n      " << d.doc << "\n";
  }
  return os.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& origin) {
  std::set<std::string> known;
  for (const auto& d : key_docs()) known.insert(d.key);
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    // strip comments outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    if (!known.count(key)) throw ConfigError(where + ": unknown config key '" + key + "' (see --help)");
    if (kv.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str(), path.string());
}

std::vector<seq::PerturbSpec> parse_perturbations(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t == "none") return {};
  if (t == "all") return probe::all_perturbations();
  std::vector<seq::PerturbSpec> out;
  for (const auto& item : split_list(t)) {
    const auto colon = item.find(':');
    const seq::PerturbKind kind = seq::perturb_kind_from_name(item.substr(0, colon));
    int lo = 1, hi = 5;
    if (colon != std::string::npos) {
      const std::string sev = item.substr(colon + 1);
      const auto dash = sev.find('-');
      try {
        lo = std::stoi(sev.substr(0, dash));
        hi = dash == std::string::npos ? lo : std::stoi(sev.substr(dash + 1));
      } catch (const std::exception&) {
        throw ConfigError("perturbation '" + item + "': malformed severity");
      }
    }
    if (lo < 1 || hi > 5 || lo > hi) throw ConfigError("perturbation '" + item + "': severity must be within 1-5");
    for (int s = lo; s <= hi; ++s) out.push_back({kind, s});
  }
  return out;
}

RunConfig from_kv(const std::map<std::string, std::string>& kv) {
  const Values v(kv);
  RunConfig c;
  c.run_id = v.str("run.id");
  c.seed = v.count("run.seed");
  for (auto s : v.counts("run.seeds")) c.seeds.push_back(s);
  if (c.seeds.empty()) c.seeds = {c.seed};
  c.out_dir = v.str("run.out_dir");
  c.pathways = split_list(v.str("run.pathways"));
  c.mode = clapp::train_mode_from_name(v.str("run.mode"));

  c.data.kind = v.str("data.source");
  c.data.folder = v.str("data.folder");
  auto& s = c.data.synthetic;
  s.num_classes = v.count("data.num_classes");
  s.train_per_class = v.count("data.train_per_class");
  s.test_per_class = v.count("data.test_per_class");
  s.size = v.count("data.size");
  s.rotation_min_deg = v.num("data.rotation_min");
  s.rotation_max_deg = v.num("data.rotation_max");
  s.illumination_min = v.num("data.illumination_min");
  s.illumination_max = v.num("data.illumination_max");
  s.translation = v.num("data.translation");
  s.texture = v.flag("data.texture");
  s.background_chromaticity = v.flag("data.background_chromaticity");
  s.seed = v.count("data.seed");

  c.plan.channels = v.counts("encoder.channels");
  c.plan.pool_after = v.counts("encoder.pool_after");

  auto& t = c.train;
  t.mode = c.mode;
  t.adam = {v.num("train.lr"), v.num("train.weight_decay"), v.num("train.beta1"), v.num("train.beta2"),
            v.num("train.eps")};
  t.batch_size = v.count("train.batch_size");
  t.epochs = v.count("train.epochs");
  c.checkpoint_every = v.count("train.checkpoint_every");
  t.patch = {v.count("train.patch_size"), v.count("train.stride")};
  t.max_offset = v.count("train.max_offset");
  t.negatives = v.count("train.negatives");
  t.augment_enabled = v.flag("train.augment");
  t.augment.min_area = v.num("train.augment_min_area");
  t.augment.flip_p = v.num("train.augment_flip");
  t.augment.out_size = s.size;
  t.seed = c.seed;

  c.task = probe::task_from_name(v.str("probe.task"));
  auto& p = c.probe;
  p.hidden = v.count("probe.hidden");
  p.dropout = v.num("probe.dropout");
  p.epochs = v.count("probe.epochs");
  p.adam.lr = v.num("probe.lr");
  p.adam.weight_decay = v.num("probe.weight_decay");
  p.batch_size = v.count("probe.batch_size");
  p.standardize = v.flag("probe.standardize");
  p.seed = c.seed;
  c.topk = v.count("probe.topk");
  const std::string avg = v.str("probe.average");
  if (avg == "per_class") {
    c.average = probe::AverageMode::kPerClass;
  } else if (avg == "per_sample") {
    c.average = probe::AverageMode::kPerSample;
  } else {
    throw ConfigError("probe.average must be per_class or per_sample, got '" + avg + "'");
  }
  c.threshold = v.num("probe.threshold");

  c.perturbations = parse_perturbations(v.str("eval.perturbations"));
  c.compare_hingecpc = v.flag("eval.compare_hingecpc");

  auto& m = c.motion;
  m.frames = v.count("movnet.frames");
  m.crop = v.count("movnet.crop");
  m.working_size = v.count("movnet.working_size");
  m.v_max = v.num("movnet.v_max");
  m.scene_v_min = v.num("movnet.scene_v_min");
  m.sprite_radius = v.num("movnet.sprite_radius");
  c.movnet_plan = c.plan;
  if (!split_list(v.str("movnet.channels")).empty()) c.movnet_plan.channels = v.counts("movnet.channels");
  c.motion_train_per_class = v.count("movnet.train_per_class");
  c.motion_test_per_class = v.count("movnet.test_per_class");
  c.movnet.batch_size = v.count("movnet.batch_size");
  c.movnet.epochs = v.count("movnet.epochs");
  c.movnet.adam.lr = v.num("movnet.lr");
  c.movnet.adam.weight_decay = v.num("movnet.weight_decay");
  c.movnet.cosine_decay = v.flag("movnet.cosine");
  c.movnet.seed = c.seed;

  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) { return from_kv(parse_kv_file(path)); }

RunConfig from_text(const std::string& text) { return from_kv(parse_kv(text)); }

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of(",\n") != std::string::npos) {
    throw ConfigError("run.id must be non-empty and contain no commas");
  }
  if (pathways.empty()) throw ConfigError("run.pathways is empty");
  probe::check_fusion_order(pathways);
  if (data.kind != "synthetic" && data.kind != "folder" && data.kind != "action") {
    throw ConfigError("data.source must be synthetic, action or folder, got '" + data.kind + "'");
  }
  if (data.kind == "folder" && data.folder.empty()) throw ConfigError("data.source = folder needs data.folder");
  if (data.kind == "synthetic") data.synthetic.validate();
  plan.validate();
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (train.max_offset < 1) throw ConfigError("train.max_offset must be >= 1");
  if (train.negatives < 1) throw ConfigError("train.negatives must be >= 1");
  if (train.patch.size == 0 || train.patch.stride == 0) throw ConfigError("patch size and stride must be positive");
  if (!(train.adam.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.augment.min_area <= 0.0 || train.augment.min_area > 1.0) {
    throw ConfigError("train.augment_min_area must be in (0, 1]");
  }
  if (!(probe.dropout >= 0.0 && probe.dropout < 1.0)) throw ConfigError("probe.dropout must be in [0, 1)");
  if (probe.hidden == 0 || probe.batch_size == 0) throw ConfigError("probe.hidden and probe.batch_size must be positive");
  if (topk == 0) throw ConfigError("probe.topk must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("probe.threshold must be in (0, 1)");
  motion.validate();
  movnet_plan.validate();
  if (movnet.batch_size == 0) throw ConfigError("movnet.batch_size must be positive");
}

std::string RunConfig::canonical() const {
  auto join = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
  };
  auto num = [](double d) { return io::format_double(d); };
  std::map<std::string, std::string> kv;
  kv["run.id"] = run_id;
  kv["run.seed"] = std::to_string(seed);
  kv["run.seeds"] = join(seeds);
  kv["run.pathways"] = [&] {
    std::string s;
    for (std::size_t i = 0; i < pathways.size(); ++i) s += (i ? "," : "") + pathways[i];
    return s;
  }();
  kv["run.mode"] = clapp::train_mode_name(mode);
  kv["data.source"] = data.kind;
  kv["data.folder"] = data.folder.string();
  const auto& s = data.synthetic;
  kv["data.synthetic"] = std::to_string(s.num_classes) + "/" + std::to_string(s.train_per_class) + "/" +
                         std::to_string(s.test_per_class) + "/" + std::to_string(s.size) + "/" +
                         num(s.rotation_min_deg) + "/" + num(s.rotation_max_deg) + "/" + num(s.illumination_min) +
                         "/" + num(s.illumination_max) + "/" + num(s.translation) + "/" + std::to_string(s.texture) +
                         "/" + std::to_string(s.background_chromaticity) + "/" + std::to_string(s.seed);
  kv["encoder.channels"] = join(plan.channels);
  kv["encoder.pool_after"] = join(plan.pool_after);
  kv["train.adam"] = num(train.adam.lr) + "/" + num(train.adam.weight_decay) + "/" + num(train.adam.beta1) + "/" +
                     num(train.adam.beta2) + "/" + num(train.adam.eps);
  kv["train.batch"] = std::to_string(train.batch_size) + "/" + std::to_string(train.epochs) + "/" +
                      std::to_string(train.patch.size) + "/" + std::to_string(train.patch.stride) + "/" +
                      std::to_string(train.max_offset) + "/" + std::to_string(train.negatives);
  kv["train.checkpoint_every"] = std::to_string(checkpoint_every);
  kv["train.augment"] = std::to_string(train.augment_enabled) + "/" + num(train.augment.min_area) + "/" +
                        num(train.augment.flip_p);
  kv["probe"] = probe::task_name(task) + "/" + std::to_string(probe.hidden) + "/" + num(probe.dropout) + "/" +
                std::to_string(probe.epochs) + "/" + num(probe.adam.lr) + "/" + num(probe.adam.weight_decay) + "/" +
                std::to_string(probe.batch_size) + "/" + std::to_string(probe.standardize) + "/" +
                std::to_string(topk) + "/" + std::to_string(static_cast<int>(average)) + "/" + num(threshold);
  std::string pert;
  for (const auto& p : perturbations) pert += seq::perturb_kind_name(p.kind) + ":" + std::to_string(p.severity) + ",";
  kv["eval.perturbations"] = pert;
  kv["eval.compare_hingecpc"] = std::to_string(compare_hingecpc);
  kv["movnet"] = std::to_string(motion.frames) + "/" + std::to_string(motion.crop) + "/" +
                 std::to_string(motion.working_size) + "/" + num(motion.v_max) + "/" + num(motion.scene_v_min) + "/" +
                 num(motion.sprite_radius) + "/" + join(movnet_plan.channels) + "/" +
                 std::to_string(motion_train_per_class) + "/" + std::to_string(motion_test_per_class) + "/" +
                 std::to_string(movnet.batch_size) + "/" + std::to_string(movnet.epochs) + "/" +
                 num(movnet.adam.lr) + "/" + num(movnet.adam.weight_decay) + "/" +
                 std::to_string(movnet.cosine_decay);
  std::string out;
  for (const auto& [k, val] : kv) out += k + " = " + val + "\n";
  return out;
}

std::uint64_t RunConfig::digest() const { return io::fnv1a(canonical()); }

std::uint64_t RunConfig::encoder_digest() const {
  static const char* kPrefixes[] = {"run.seed ", "run.mode ", "data.", "encoder.", "train.", "movnet "};
  std::stringstream in(canonical());
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("train.checkpoint_every ", 0) == 0) continue;
    for (const char* p : kPrefixes) {
      if (line.rfind(p, 0) == 0) {
        kept += line + "\n";
        break;
      }
    }
  }
  return io::fnv1a(kept);
}

}  // namespace iclp::config
