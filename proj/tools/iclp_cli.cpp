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


// iclp command-line tool. Talks to the library through the C API only.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iclp/iclp.h"

namespace {

const char* status_name(iclp_status s) {
  switch (s) {
    case ICLP_OK: return "ok";
    case ICLP_ERR_USAGE: return "usage";
    case ICLP_ERR_DATA: return "data";
    case ICLP_ERR_NUMERIC: return "numeric";
    default: return "internal";
  }
}

int report(iclp_status s) {
  if (s != ICLP_OK) std::fprintf(stderr, "iclp: error[%s]: %s\n", status_name(s), iclp_last_error());
  // internal failures share the numeric exit code; the message tells them apart
  return s == ICLP_ERR_INTERNAL ? 3 : static_cast<int>(s);
}

void log_line(const char* line, void* quiet) {
  if (!*static_cast<bool*>(quiet)) std::fprintf(stderr, "%s\n", line);
}

struct ConfigHandle {
  iclp_config* cfg = nullptr;
  ~ConfigHandle() { iclp_config_destroy(cfg); }
};

// Loads --config and applies each --set key=value in order.
iclp_status make_config(const std::string& path, const std::vector<std::string>& sets, ConfigHandle& h) {
  iclp_status s = iclp_config_create(path.empty() ? nullptr : path.c_str(), &h.cfg);
  if (s != ICLP_OK) return s;
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "iclp: error[usage]: --set expects key=value, got '%s'\n", kv.c_str());
      return ICLP_ERR_USAGE;
    }
    s = iclp_config_set(h.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != ICLP_OK) return s;
  }
  return ICLP_OK;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decomposed-input local contrastive learning toolkit"};
  app.require_subcommand(1);
  app.footer(std::string("Configuration keys (set in the config file or with --set section.key=value):\n\n") +
             iclp_config_help() + "\nEnvironment: ICLP_THREADS caps the number of worker threads.\n" +
             "Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", sets, "Override a key, e.g. --set train.epochs=30");
  };

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset to an image folder");
  std::string gen_out;
  add_config(gen);
  gen->add_option("-o,--out", gen_out, "Output dataset directory")->required();

  auto* dec = app.add_subcommand("decompose", "Write one operator's channels as a PNG grid");
  std::string dec_image, dec_op, dec_out;
  dec->add_option("image", dec_image, "Input PNG/PPM/PGM")->required()->check(CLI::ExistingFile);
  dec->add_option("--op", dec_op, "plain, lbp, rgnorm or dtcwt")->required();
  dec->add_option("-o,--out", dec_out, "Output PNG")->required();

  auto* tr = app.add_subcommand("train", "Train the configured pathways and write checkpoints");
  add_config(tr);

  auto* pr = app.add_subcommand("probe", "Train and evaluate a probe on frozen checkpoints");
  std::vector<std::string> pr_ckpts;
  add_config(pr);
  pr->add_option("checkpoints", pr_ckpts, "Encoder checkpoints to fuse")->required();

  auto* pt = app.add_subcommand("perturb", "Evaluate probes under image perturbations");
  std::vector<std::string> pt_models;
  add_config(pt);
  pt->add_option("-m,--model", pt_models, "Model as name=a.ckpt[,b.ckpt...]; repeatable")->required();

  auto* ab = app.add_subcommand("ablate", "Compare single, three-plain and decomposed encoders");
  add_config(ab);

  auto* pl = app.add_subcommand("plot", "Draw per-layer loss curves from a metrics CSV");
  std::string pl_csv, pl_out;
  pl->add_option("metrics", pl_csv, "metrics.csv")->required()->check(CLI::ExistingFile);
  pl->add_option("-o,--out", pl_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  iclp_set_log(log_line, &quiet);
  if (*dec) return report(iclp_decompose(dec_image.c_str(), dec_op.c_str(), dec_out.c_str()));
  if (*pl) {
    const iclp_status s = iclp_plot(pl_csv.c_str(), pl_out.c_str());
    if (s == ICLP_OK && !quiet) std::fprintf(stderr, "[plot] wrote SVG charts to %s\n", pl_out.c_str());
    return report(s);
  }

  ConfigHandle h;
  iclp_status s = make_config(config_path, sets, h);
  if (s != ICLP_OK) return report(s);
  if (*gen) {
    s = iclp_gen_data(h.cfg, gen_out.c_str());
  } else if (*tr) {
    s = iclp_train(h.cfg);
  } else if (*pr) {
    const auto c = c_strings(pr_ckpts);
    s = iclp_probe(h.cfg, c.data(), c.size());
  } else if (*pt) {
    const auto c = c_strings(pt_models);
    s = iclp_perturb(h.cfg, c.data(), c.size());
  } else if (*ab) {
    s = iclp_ablate(h.cfg);
  }
  return report(s);
}
