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


#include "iclp/iclp.h"

#include <cstring>
#include <filesystem>
#include <mutex>
#include <new>
#include <string>
#include <vector>

#include "iclp/config.hpp"
#include "iclp/error.hpp"
#include "iclp/pipeline.hpp"

struct iclp_config {
  std::map<std::string, std::string> kv;
  iclp::config::RunConfig resolved;
};

struct iclp_pathway {
  iclp::clapp::ImagePathway pathway;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mu;
iclp_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

iclp::pipeline::Log current_log() {
  std::lock_guard<std::mutex> lock(g_log_mu);
  if (!g_log_fn) return {};
  iclp_log_fn fn = g_log_fn;
  void* user = g_log_user;
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

template <typename F>
iclp_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return ICLP_OK;
  } catch (const iclp::Error& e) {
    g_last_error = e.what();
    return static_cast<iclp_status>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ICLP_ERR_DATA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ICLP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ICLP_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw iclp::ConfigError(what);
}

}  // namespace

extern "C" {

const char* iclp_last_error(void) { return g_last_error.c_str(); }

const char* iclp_version(void) { return "0.1.0"; }

void iclp_set_log(iclp_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mu);
  g_log_fn = fn;
  g_log_user = user;
}

const char* iclp_config_help(void) {
  static const std::string text = iclp::config::describe_keys();
  return text.c_str();
}

iclp_status iclp_config_create(const char* path, iclp_config** out) {
  return guarded([&] {
    require(out != nullptr, "iclp_config_create: out is NULL");
    *out = nullptr;
    auto cfg = std::make_unique<iclp_config>();
    if (path) cfg->kv = iclp::config::parse_kv_file(path);
    cfg->resolved = iclp::config::from_kv(cfg->kv);
    *out = cfg.release();
  });
}

iclp_status iclp_config_set(iclp_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "iclp_config_set: NULL argument");
    const std::string k = key;
    const auto dot = k.find('.');
    require(dot != std::string::npos, "configuration keys have the form section.name");
    // reuse the file parser so overrides get the same checks as file entries
    const auto parsed =
        iclp::config::parse_kv("[" + k.substr(0, dot) + "]\n" + k.substr(dot + 1) + " = " + value + "\n", "--set");
    auto kv = cfg->kv;
    for (const auto& [pk, pv] : parsed) kv[pk] = pv;
    cfg->resolved = iclp::config::from_kv(kv);
    cfg->kv = std::move(kv);
  });
}

iclp_status iclp_config_digest(const iclp_config* cfg, uint64_t* out) {
  return guarded([&] {
    require(cfg && out, "iclp_config_digest: NULL argument");
    *out = cfg->resolved.digest();
  });
}

iclp_status iclp_config_canonical(const iclp_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg != nullptr, "iclp_config_canonical: cfg is NULL");
    const std::string text = cfg->resolved.canonical();
    if (needed) *needed = text.size();
    if (buf && cap > 0) {
      const size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

void iclp_config_destroy(iclp_config* cfg) { delete cfg; }

iclp_status iclp_gen_data(const iclp_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg && out_dir, "iclp_gen_data: NULL argument");
    iclp::pipeline::gen_data(cfg->resolved, out_dir, current_log());
  });
}

iclp_status iclp_decompose(const char* image, const char* op, const char* out_png) {
  return guarded([&] {
    require(image && op && out_png, "iclp_decompose: NULL argument");
    iclp::pipeline::decompose(image, op, out_png);
  });
}

iclp_status iclp_train(const iclp_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "iclp_train: cfg is NULL");
    iclp::pipeline::train(cfg->resolved, current_log());
  });
}

iclp_status iclp_probe(const iclp_config* cfg, const char* const* checkpoints, size_t n) {
  return guarded([&] {
    require(cfg && (checkpoints || n == 0), "iclp_probe: NULL argument");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n; ++i) {
      require(checkpoints[i] != nullptr, "iclp_probe: NULL checkpoint path");
      paths.emplace_back(checkpoints[i]);
    }
    iclp::pipeline::probe_checkpoints(cfg->resolved, paths, current_log());
  });
}

iclp_status iclp_perturb(const iclp_config* cfg, const char* const* models, size_t n) {
  return guarded([&] {
    require(cfg && (models || n == 0), "iclp_perturb: NULL argument");
    std::vector<iclp::pipeline::ModelSpec> specs;
    for (size_t i = 0; i < n; ++i) {
      require(models[i] != nullptr, "iclp_perturb: NULL model");
      const std::string m = models[i];
      const auto eq = m.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
        throw iclp::ConfigError("model '" + m + "' must be name=a.ckpt[,b.ckpt...]");
      }
      iclp::pipeline::ModelSpec spec;
      spec.name = m.substr(0, eq);
      size_t pos = eq + 1;
      while (pos <= m.size()) {
        const size_t comma = std::min(m.find(',', pos), m.size());
        if (comma > pos) spec.checkpoints.emplace_back(m.substr(pos, comma - pos));
        pos = comma + 1;
      }
      specs.push_back(std::move(spec));
    }
    iclp::pipeline::perturb(cfg->resolved, specs, current_log());
  });
}

iclp_status iclp_ablate(const iclp_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "iclp_ablate: cfg is NULL");
    iclp::pipeline::ablate(cfg->resolved, current_log());
  });
}

iclp_status iclp_plot(const char* metrics_csv, const char* out_dir) {
  return guarded([&] {
    require(metrics_csv && out_dir, "iclp_plot: NULL argument");
    iclp::pipeline::plot(metrics_csv, out_dir);
  });
}

iclp_status iclp_pathway_load(const char* checkpoint, iclp_pathway** out) {
  return guarded([&] {
    require(checkpoint && out, "iclp_pathway_load: NULL argument");
    *out = nullptr;
    auto p = std::make_unique<iclp_pathway>();
    p->pathway = iclp::pipeline::pathway_from_checkpoint(iclp::io::load_checkpoint(checkpoint));
    *out = p.release();
  });
}

size_t iclp_pathway_dim(const iclp_pathway* p) { return p ? p->pathway.encoder.output_dim() : 0; }

const char* iclp_pathway_name(const iclp_pathway* p) { return p ? p->pathway.name.c_str() : ""; }

iclp_status iclp_pathway_features(const iclp_pathway* p, const iclp_config* cfg, const float* rgb, size_t h, size_t w,
                                  float* out, size_t cap) {
  return guarded([&] {
    require(p && rgb && out, "iclp_pathway_features: NULL argument");
    const size_t d = p->pathway.encoder.output_dim();
    require(cap >= d, "iclp_pathway_features: output buffer too small");
    iclp::TensorF img({3, h, w}, std::vector<float>(rgb, rgb + 3 * h * w));
    const auto geom = cfg ? cfg->resolved.train.patch : iclp::config::RunConfig{}.train.patch;
    const iclp::TensorF f = iclp::probe::pathway_features(p->pathway, {img}, geom);
    std::memcpy(out, f.data(), d * sizeof(float));
  });
}

void iclp_pathway_destroy(iclp_pathway* p) { delete p; }

}  // extern "C"
