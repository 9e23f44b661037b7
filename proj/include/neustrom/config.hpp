#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/data.hpp"
#include "neustrom/kernel.hpp"

namespace neustrom {

/// Raw parsed config: "section.key" -> value string.
using ConfigMap = std::map<std::string, std::string>;

struct ParseResult {
  ConfigMap values;
  std::vector<std::string> errors;
};

/// Line-oriented `key = value` format with [section] headers and #-comments.
inline ParseResult parse_config_text(const std::string& text) {
  ParseResult result;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        result.errors.push_back("line " + std::to_string(lineno) + ": unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        result.errors.push_back("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      result.errors.push_back("line " + std::to_string(lineno) + ": expected key = value, got '" +
                              line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      result.errors.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    if (section.empty()) {
      result.errors.push_back("line " + std::to_string(lineno) + ": key '" + key +
                              "' outside any [section]");
      continue;
    }
    result.values[section + "." + key] = value;
  }
  return result;
}

inline ParseResult parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult r;
    r.errors.push_back("cannot open config file '" + path + "'");
    return r;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// KEY=VALUE strings (KEY is section.key) override parsed file values.
inline void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides,
                            std::vector<std::string>& errors) {
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || ov.find('.') == std::string::npos || eq < ov.find('.')) {
      errors.push_back("override '" + ov + "' must look like section.key=value");
      continue;
    }
    map[ov.substr(0, eq)] = ov.substr(eq + 1);
  }
}

// ---------------------------------------------------------------------------
// Resolved experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // data
  std::string data_kind = "one-circle";  // one-circle | square-grid | two-circles | csv | idx | ring
  int n = 500;
  int side = 32;
  double radius = 1.0;
  double radius2 = 2.0;
  double spacing = 1.0;
  double noise = 0.0;
  std::string data_path;
  int label_cols = 0;
  std::string idx_images;
  std::string idx_labels;
  int limit = 0;       // optional deterministic subset cap (0 = use everything)
  double scale = 1.0;  // multiplier applied to loaded points (unit normalization)

  // input probability
  KernelSpec input_kernel{KernelKind::kRbf, 30.0};
  int knn = 0;  // 0 = dense normalization over all points

  // embedding + model
  EmbeddingConfig embedding;
  int landmarks = 40;
  KernelSpec model_kernel{KernelKind::kRbf, 1.0};

  // training
  std::string mode = "unsupervised";  // unsupervised | supervised | episodic
  int epochs = 50;
  double lr = 1e-4;
  int batch = 10;
  bool reinit = false;
  bool track_kl = true;
  double label_fraction = 0.2;
  int trials = 10;
  int task = 1;  // which label set drives the supervised conditional
  int sup_epochs = 200;
  double sup_lr = 1e-3;
  int sup_batch = 20;
  int episodes = 2000;
  double discount = 0.9;
  double rho = 1.0;
  int trajectory = 10;

  // ring environment
  int ring_size = 20;
  double ring_radius = 1.0;
  StepKernel ring_step{0.4, 0.2, 0.4};

  // output
  std::string out_dir = "out";
  uint64_t seed = 1;
  std::string svm_points;  // optional external classifier operating points (copied through)

  /// Canonical echo of every resolved setting, for manifests and `validate`.
  std::map<std::string, std::string> resolved() const;
};

struct ValidationReport {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const ConfigMap& map, ValidationReport& report) : map_(map), report_(&report) {
    for (const auto& [k, v] : map_) unseen_.insert(k);
  }

  std::string str(const std::string& key, const std::string& fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    unseen_.erase(key);
    return it->second;
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    unseen_.erase(key);
    const std::string& v = it->second;
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    report_->errors.push_back(key + ": expected a boolean, got '" + v + "'");
    return fallback;
  }

  double real(const std::string& key, double fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    unseen_.erase(key);
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (...) {
      report_->errors.push_back(key + ": expected a number, got '" + it->second + "'");
      return fallback;
    }
  }

  int integer(const std::string& key, int fallback) {
    const double v = real(key, fallback);
    if (v != std::floor(v)) {
      report_->errors.push_back(key + ": expected an integer");
      return fallback;
    }
    return static_cast<int>(v);
  }

  uint64_t u64(const std::string& key, uint64_t fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    unseen_.erase(key);
    try {
      return std::stoull(it->second);
    } catch (...) {
      report_->errors.push_back(key + ": expected a nonnegative integer seed");
      return fallback;
    }
  }

  void finish() {
    for (const auto& key : unseen_) report_->errors.push_back("unknown key '" + key + "'");
  }

 private:
  const ConfigMap& map_;
  ValidationReport* report_;
  std::set<std::string> unseen_;
};

}  // namespace detail

/// Structural and cross-field validation; collects every problem instead of
/// stopping at the first.
inline ExperimentConfig resolve_config(const ConfigMap& map, ValidationReport& report) {
  detail::ConfigReader r(map, report);
  ExperimentConfig c;

  c.data_kind = r.str("data.kind", c.data_kind);
  c.n = r.integer("data.n", c.n);
  c.side = r.integer("data.side", c.side);
  c.radius = r.real("data.radius", c.radius);
  c.radius2 = r.real("data.radius2", c.radius2);
  c.spacing = r.real("data.spacing", c.spacing);
  c.noise = r.real("data.noise", c.noise);
  c.data_path = r.str("data.path", c.data_path);
  c.label_cols = r.integer("data.label_cols", c.label_cols);
  c.idx_images = r.str("data.images", c.idx_images);
  c.idx_labels = r.str("data.labels", c.idx_labels);
  c.limit = r.integer("data.limit", c.limit);
  c.scale = r.real("data.scale", c.scale);

  const std::string ik = r.str("input.kernel", "rbf");
  c.input_kernel.gamma = r.real("input.gamma", c.input_kernel.gamma);
  c.knn = r.integer("input.knn", c.knn);

  c.embedding.use_rff = r.boolean("embedding.rff", c.embedding.use_rff);
  c.embedding.rff_half_count = r.integer("embedding.features", c.embedding.rff_half_count);
  c.embedding.rff_gamma = r.real("embedding.gamma", c.embedding.rff_gamma);
  c.embedding.learn_rff_gamma = r.boolean("embedding.learn_gamma", c.embedding.learn_rff_gamma);
  c.embedding.hidden_dim = r.integer("embedding.hidden", c.embedding.hidden_dim);
  c.embedding.output_dim = r.integer("embedding.dim", c.embedding.output_dim);

  c.landmarks = r.integer("model.r", 0);
  const std::string mk = r.str("model.kernel", "rbf");
  c.model_kernel.gamma = r.real("model.gamma", c.model_kernel.gamma);

  c.mode = r.str("train.mode", c.mode);
  c.epochs = r.integer("train.epochs", c.epochs);
  c.lr = r.real("train.lr", c.lr);
  c.batch = r.integer("train.batch", c.batch);
  c.reinit = r.boolean("train.reinit", c.reinit);
  c.track_kl = r.boolean("train.track_kl", c.track_kl);
  c.label_fraction = r.real("train.label_fraction", c.label_fraction);
  c.trials = r.integer("train.trials", c.trials);
  c.task = r.integer("train.task", c.task);
  c.sup_epochs = r.integer("train.sup_epochs", c.sup_epochs);
  c.sup_lr = r.real("train.sup_lr", c.sup_lr);
  c.sup_batch = r.integer("train.sup_batch", c.sup_batch);
  c.episodes = r.integer("train.episodes", c.episodes);
  c.discount = r.real("train.discount", c.discount);
  c.rho = r.real("train.rho", c.rho);
  c.trajectory = r.integer("train.trajectory", c.trajectory);

  c.ring_size = r.integer("env.size", c.ring_size);
  c.ring_radius = r.real("env.radius", c.ring_radius);
  c.ring_step.p_left = r.real("env.p_left", c.ring_step.p_left);
  c.ring_step.p_stay = r.real("env.p_stay", c.ring_step.p_stay);
  c.ring_step.p_right = r.real("env.p_right", c.ring_step.p_right);

  c.out_dir = r.str("output.dir", c.out_dir);
  c.seed = r.u64("output.seed", c.seed);
  c.svm_points = r.str("output.svm_points", c.svm_points);
  r.finish();

  // enumerations
  if (ik == "rbf")
    c.input_kernel.kind = KernelKind::kRbf;
  else if (ik == "exp-dot")
    c.input_kernel.kind = KernelKind::kExpDot;
  else
    report.errors.push_back("input.kernel: must be rbf or exp-dot, got '" + ik + "'");
  if (mk == "rbf")
    c.model_kernel.kind = KernelKind::kRbf;
  else if (mk == "exp-dot")
    c.model_kernel.kind = KernelKind::kExpDot;
  else
    report.errors.push_back("model.kernel: must be rbf or exp-dot, got '" + mk + "'");

  const bool kind_ok = c.data_kind == "one-circle" || c.data_kind == "square-grid" ||
                       c.data_kind == "two-circles" || c.data_kind == "csv" ||
                       c.data_kind == "idx" || c.data_kind == "ring";
  if (!kind_ok) report.errors.push_back("data.kind: unknown dataset kind '" + c.data_kind + "'");
  if (c.data_kind == "csv" && c.data_path.empty())
    report.errors.push_back("data.path: required for csv datasets");
  if (c.data_kind == "idx" && c.idx_images.empty())
    report.errors.push_back("data.images: required for idx datasets");

  const bool mode_ok = c.mode == "unsupervised" || c.mode == "supervised" || c.mode == "episodic";
  if (!mode_ok) report.errors.push_back("train.mode: must be unsupervised, supervised or episodic");

  if (c.landmarks < 1) report.errors.push_back("model.r: required and must be >= 1");
  if (c.epochs < 1) report.errors.push_back("train.epochs: must be >= 1");
  if (!(c.lr > 0.0)) report.errors.push_back("train.lr: must be positive");
  if (c.batch < 1) report.errors.push_back("train.batch: must be >= 1");
  if (c.embedding.use_rff && c.embedding.rff_half_count < 1)
    report.errors.push_back("embedding.features: must be >= 1 when rff is on");
  if (c.embedding.hidden_dim < 1) report.errors.push_back("embedding.hidden: must be >= 1");
  if (c.embedding.output_dim < 1) report.errors.push_back("embedding.dim: must be >= 1");
  if (!(c.input_kernel.gamma > 0.0)) report.errors.push_back("input.gamma: must be positive");
  if (c.knn < 0) report.errors.push_back("input.knn: must be >= 0 (0 disables)");
  if (!(c.scale > 0.0)) report.errors.push_back("data.scale: must be positive");

  // dataset size knowable without touching files
  int known_n = -1;
  if (c.data_kind == "one-circle") known_n = c.n;
  if (c.data_kind == "two-circles") known_n = 2 * c.n;
  if (c.data_kind == "square-grid") known_n = c.side * c.side;
  if (c.limit > 0 && known_n > 0) known_n = std::min(known_n, c.limit);
  if (known_n > 0 && c.landmarks > known_n)
    report.errors.push_back("model.r: " + std::to_string(c.landmarks) +
                            " exceeds the dataset size " + std::to_string(known_n));
  if (known_n > 0 && c.knn >= known_n)
    report.errors.push_back("input.knn: must be smaller than the dataset size");

  if (c.mode == "supervised") {
    const bool has_labels = c.data_kind == "two-circles" ||
                            (c.data_kind == "csv" && c.label_cols >= 1) ||
                            (c.data_kind == "idx" && !c.idx_labels.empty());
    if (!has_labels)
      report.errors.push_back("train.mode: supervised requires a labeled dataset "
                              "(two-circles, csv with label_cols >= 1, or idx with data.labels)");
    if (!(c.label_fraction > 0.0 && c.label_fraction < 1.0))
      report.errors.push_back("train.label_fraction: must lie in (0,1)");
    if (c.trials < 1) report.errors.push_back("train.trials: must be >= 1");
    if (c.task != 1 && c.task != 2) report.errors.push_back("train.task: must be 1 or 2");
    if (c.task == 2 && c.data_kind != "two-circles")
      report.errors.push_back("train.task: task 2 labels only exist for two-circles");
    if (c.sup_epochs < 1) report.errors.push_back("train.sup_epochs: must be >= 1");
    if (!(c.sup_lr > 0.0)) report.errors.push_back("train.sup_lr: must be positive");
    if (c.sup_batch < 1) report.errors.push_back("train.sup_batch: must be >= 1");
  }
  if (c.mode == "episodic") {
    if (c.data_kind != "ring")
      report.errors.push_back("train.mode: episodic requires data.kind = ring");
    if (c.episodes < 1) report.errors.push_back("train.episodes: must be >= 1");
    if (!(c.discount > 0.0 && c.discount < 1.0))
      report.errors.push_back("train.discount: must lie in (0,1)");
    if (c.rho < 0.0) report.errors.push_back("train.rho: must be >= 0");
    if (c.trajectory < 1) report.errors.push_back("train.trajectory: must be >= 1");
    if (c.ring_size < 3) report.errors.push_back("env.size: must be >= 3");
    const double tot = c.ring_step.p_left + c.ring_step.p_stay + c.ring_step.p_right;
    if (std::abs(tot - 1.0) > 1e-9)
      report.errors.push_back("env.p_left/p_stay/p_right: must sum to 1");
  }
  if (c.data_kind == "ring" && c.mode != "episodic")
    report.errors.push_back("data.kind: ring environments require train.mode = episodic");

  if (c.out_dir.empty()) report.errors.push_back("output.dir: must not be empty");
  return c;
}

inline std::map<std::string, std::string> ExperimentConfig::resolved() const {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, const std::string& v) { m[k] = v; };
  auto num = [&](const std::string& k, double v) {
    std::ostringstream os;
    os << v;
    put(k, os.str());
  };
  put("data.kind", data_kind);
  num("data.n", n);
  num("data.side", side);
  num("data.radius", radius);
  num("data.radius2", radius2);
  num("data.spacing", spacing);
  num("data.noise", noise);
  if (!data_path.empty()) put("data.path", data_path);
  num("data.label_cols", label_cols);
  if (!idx_images.empty()) put("data.images", idx_images);
  if (!idx_labels.empty()) put("data.labels", idx_labels);
  num("data.limit", limit);
  num("data.scale", scale);
  put("input.kernel", input_kernel.kind == KernelKind::kRbf ? "rbf" : "exp-dot");
  num("input.gamma", input_kernel.gamma);
  num("input.knn", knn);
  put("embedding.rff", embedding.use_rff ? "on" : "off");
  num("embedding.features", embedding.rff_half_count);
  num("embedding.gamma", embedding.rff_gamma);
  put("embedding.learn_gamma", embedding.learn_rff_gamma ? "on" : "off");
  num("embedding.hidden", embedding.hidden_dim);
  num("embedding.dim", embedding.output_dim);
  num("model.r", landmarks);
  put("model.kernel", model_kernel.kind == KernelKind::kRbf ? "rbf" : "exp-dot");
  num("model.gamma", model_kernel.gamma);
  put("train.mode", mode);
  num("train.epochs", epochs);
  num("train.lr", lr);
  num("train.batch", batch);
  put("train.reinit", reinit ? "on" : "off");
  put("train.track_kl", track_kl ? "on" : "off");
  if (mode == "supervised") {
    num("train.label_fraction", label_fraction);
    num("train.trials", trials);
    num("train.task", task);
    num("train.sup_epochs", sup_epochs);
    num("train.sup_lr", sup_lr);
    num("train.sup_batch", sup_batch);
  }
  if (mode == "episodic") {
    num("train.episodes", episodes);
    num("train.discount", discount);
    num("train.rho", rho);
    num("train.trajectory", trajectory);
    num("env.size", ring_size);
    num("env.radius", ring_radius);
    num("env.p_left", ring_step.p_left);
    num("env.p_stay", ring_step.p_stay);
    num("env.p_right", ring_step.p_right);
  }
  put("output.dir", out_dir);
  put("output.seed", std::to_string(seed));
  if (!svm_points.empty()) put("output.svm_points", svm_points);
  return m;
}

}  // namespace neustrom
