#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "neustrom/checkpoint.hpp"
#include "neustrom/config.hpp"
#include "neustrom/data.hpp"
#include "neustrom/eval.hpp"
#include "neustrom/io.hpp"
#include "neustrom/model.hpp"
#include "neustrom/supervised.hpp"
#include "neustrom/train.hpp"

namespace neustrom {

/// Response floor used when reporting receptive-field sparsity.
inline constexpr double kRfTau = 1e-3;

// ---------------------------------------------------------------------------
// Config-driven construction
// ---------------------------------------------------------------------------

inline Dataset load_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  if (cfg.data_kind == "one-circle" || cfg.data_kind == "square-grid" ||
      cfg.data_kind == "two-circles") {
    SyntheticSpec spec;
    spec.kind = cfg.data_kind == "one-circle"    ? SyntheticKind::kOneCircle
                : cfg.data_kind == "square-grid" ? SyntheticKind::kSquareGrid
                                                 : SyntheticKind::kTwoCircles;
    spec.n = cfg.n;
    spec.side = cfg.side;
    spec.radius = cfg.radius;
    spec.radius2 = cfg.radius2;
    spec.spacing = cfg.spacing;
    spec.noise = cfg.noise;
    spec.seed = cfg.seed;
    data = gen_synthetic(spec);
  } else if (cfg.data_kind == "csv") {
    data = load_csv_dataset(cfg.data_path, cfg.label_cols);
  } else if (cfg.data_kind == "idx") {
    data.points = flatten_images(load_idx(cfg.idx_images));
    if (!cfg.idx_labels.empty()) {
      const Tensor labels = load_idx(cfg.idx_labels);
      if (labels.dim(0) != data.points.dim(0))
        throw std::runtime_error("load_dataset: idx image/label counts differ");
      data.labels.resize(static_cast<size_t>(labels.dim(0)));
      for (int i = 0; i < labels.dim(0); ++i)
        data.labels[static_cast<size_t>(i)] = static_cast<int>(labels[i]);
    }
  } else {
    throw std::runtime_error("load_dataset: no point dataset for kind '" + cfg.data_kind + "'");
  }

  if (cfg.scale != 1.0)
    for (int64_t i = 0; i < data.points.size(); ++i) data.points[i] *= cfg.scale;
  if (cfg.limit > 0 && cfg.limit < data.points.dim(0)) {
    const int n = data.points.dim(0);
    const int d = data.points.dim(1);
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(cfg.seed, "subset"));
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(cfg.limit));
    std::sort(idx.begin(), idx.end());
    Dataset sub;
    sub.points = Tensor::zeros({cfg.limit, d});
    for (int i = 0; i < cfg.limit; ++i)
      for (int j = 0; j < d; ++j) sub.points.at(i, j) = data.points.at(idx[static_cast<size_t>(i)], j);
    auto take = [&](const std::vector<int>& src) {
      std::vector<int> out;
      if (src.empty()) return out;
      out.reserve(idx.size());
      for (int i : idx) out.push_back(src[static_cast<size_t>(i)]);
      return out;
    };
    sub.labels = take(data.labels);
    sub.labels_alt = take(data.labels_alt);
    data = std::move(sub);
  }
  return data;
}

inline ConditionalMatrix build_input_probability(const ExperimentConfig& cfg, const Dataset& data) {
  return build_row_normalized(data.points, cfg.input_kernel,
                              cfg.knn > 0 ? std::optional<int>(cfg.knn) : std::nullopt);
}

inline ModelConfig model_config_from(const ExperimentConfig& cfg, int input_dim) {
  ModelConfig mc;
  mc.embedding = cfg.embedding;
  mc.embedding.input_dim = input_dim;
  mc.landmarks = cfg.landmarks;
  mc.kernel = cfg.model_kernel;
  return mc;
}

inline TrainConfig train_config_from(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.lr;
  tc.batch_size = cfg.batch;
  tc.kmeans_reinit = cfg.reinit;
  tc.track_kl = cfg.track_kl;
  tc.seed = cfg.seed;
  tc.episodes = cfg.episodes;
  tc.discount = cfg.discount;
  tc.rho = cfg.rho;
  return tc;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline std::string manifest_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "format = neustrom-manifest\n";
  os << "version = 1\n";
  for (const auto& [k, v] : cfg.resolved()) os << k << " = " << v << "\n";
  os << "seed.init = " << derive_seed(cfg.seed, "init") << "\n";
  os << "seed.rff = " << derive_seed(derive_seed(cfg.seed, "init"), "rff") << "\n";
  os << "seed.kmeans = " << derive_seed(derive_seed(cfg.seed, "init"), "kmeans") << "\n";
  os << "seed.reinit = " << derive_seed(cfg.seed, "kmeans-reinit") << "\n";
  return os.str();
}

inline void write_loss_history(const std::filesystem::path& path, const TrainResult& result) {
  atomic_write(path, [&](std::ostream& os) {
    os << "epoch,mean_loss,learning_rate\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
      os << e << ',' << fmt_double(result.epoch_loss[e]) << ',' << fmt_double(result.epoch_lr[e])
         << '\n';
  });
}

inline void write_kl_history(const std::filesystem::path& path, const TrainResult& result) {
  if (result.epoch_kl.empty()) return;
  atomic_write(path, [&](std::ostream& os) {
    os << "epoch,kl\n";
    for (size_t e = 0; e < result.epoch_kl.size(); ++e)
      os << e << ',' << fmt_double(result.epoch_kl[e]) << '\n';
  });
}

inline Tensor output_kernel_matrix(const Tensor& g) {
  const int r = g.dim(0);
  const int n = g.dim(1);
  Tensor kernel = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < r; ++k) acc += g.at(k, i) * g.at(k, j);
      kernel.at(i, j) = acc;
      kernel.at(j, i) = acc;
    }
  return kernel;
}

/// Feature-level artifacts shared by every mode: the output kernel G^T G, the
/// receptive fields G^T, and per-cell sparsity/locality metrics.
inline void write_feature_artifacts(const std::filesystem::path& dir, const Tensor& g,
                                    const Tensor& coords) {
  const Tensor kernel = output_kernel_matrix(g);
  atomic_write(dir / "output_kernel.csv", [&](std::ostream& os) { write_csv_matrix(os, kernel); });
  write_pgm(dir / "output_kernel.pgm", kernel);

  const int r = g.dim(0);
  const int n = g.dim(1);
  Tensor rf = Tensor::zeros({n, r});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < r; ++k) rf.at(i, k) = g.at(k, i);
  atomic_write(dir / "rf.csv", [&](std::ostream& os) { write_csv_matrix(os, rf); });
  write_pgm(dir / "rf.pgm", rf);

  const RfMetrics metrics = rf_metrics(g, coords, kRfTau);
  atomic_write(dir / "rf_metrics.csv", [&](std::ostream& os) {
    os << "cell,sparsity,locality,defined\n";
    for (int c = 0; c < r; ++c)
      os << c << ',' << fmt_double(metrics.sparsity[static_cast<size_t>(c)]) << ','
         << fmt_double(metrics.locality[static_cast<size_t>(c)]) << ','
         << int(metrics.defined[static_cast<size_t>(c)]) << '\n';
    os << "mean," << fmt_double(metrics.mean_sparsity) << ',' << fmt_double(metrics.mean_locality)
       << ",1\n";
  });
}

// ---------------------------------------------------------------------------
// Mode runners
// ---------------------------------------------------------------------------

struct UnsupervisedOutcome {
  Model model;
  TrainResult result;
  Dataset data;
  std::optional<ConditionalMatrix> p_in;
};

inline UnsupervisedOutcome run_unsupervised_phase(const ExperimentConfig& cfg,
                                                  const std::filesystem::path& dir,
                                                  std::ostream& log) {
  Dataset data = load_dataset(cfg);
  log << "dataset: " << data.points.dim(0) << " points, dim " << data.points.dim(1) << "\n";
  ConditionalMatrix p_in = build_input_probability(cfg, data);
  Model model = init_model(data.points, model_config_from(cfg, data.points.dim(1)),
                           derive_seed(cfg.seed, "init"));
  TrainHooks hooks;
  hooks.on_reinit = [&](int epoch) {
    log << "k-means re-initialization at epoch " << epoch << "\n";
    save_model((dir / "checkpoint_reinit.neus").string(), model);
  };
  TrainResult result = train_finite(data.points, p_in, model, train_config_from(cfg), &hooks);
  log << "trained " << result.epoch_loss.size() << " epochs, final mean loss "
      << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";

  write_loss_history(dir / "loss_history.csv", result);
  write_kl_history(dir / "kl_history.csv", result);
  save_model((dir / "checkpoint.neus").string(), model);
  const Tensor g = forward_features(model, data.points);
  write_feature_artifacts(dir, g, data.points);
  atomic_write(dir / "p_in.csv", [&](std::ostream& os) { p_in.to_csv(os); });
  return {std::move(model), std::move(result), std::move(data), std::move(p_in)};
}

struct TrialOutcome {
  int trial = 0;
  uint64_t seed = 0;
  int redraws = 0;
  double prg_auc = 0.0;
  double accuracy = 0.0;
  TaskHead head;
  std::string prg_csv;
  std::string confusion_csv;
};

/// One supervised trial: split, train the task head on the labeled side,
/// evaluate PRG and NMF-HA accuracy on the held-out side.
inline TrialOutcome run_supervised_trial(const ExperimentConfig& cfg, const Model& base,
                                         const Dataset& data, const Tensor& g_all,
                                         const std::vector<int>& task_labels, int trial) {
  const int n = data.points.dim(0);
  TrialOutcome out;
  out.trial = trial;

  std::optional<LabeledSplit> split;
  std::optional<TaskTrainOutput> trained;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 50)
      throw std::runtime_error("supervised trial " + std::to_string(trial) +
                               ": no split with every class labeled after 50 redraws");
    const uint64_t seed =
        derive_seed(cfg.seed, "trial", static_cast<uint64_t>(trial) * 1000 + attempt);
    LabeledSplit s = split_labeled(n, cfg.label_fraction, seed);
    std::vector<int> train_labels;
    train_labels.reserve(s.train_idx.size());
    for (int i : s.train_idx) train_labels.push_back(task_labels[static_cast<size_t>(i)]);
    TrainConfig tc;
    tc.epochs = cfg.sup_epochs;
    tc.learning_rate = cfg.sup_lr;
    tc.batch_size = cfg.sup_batch;
    tc.seed = seed;
    try {
      TaskTrainOutput t = train_task(base, data.points, s.train_idx, train_labels, tc, cfg.task);
      out.seed = seed;
      out.redraws = attempt;
      split = std::move(s);
      trained = std::move(t);
      break;
    } catch (const std::invalid_argument&) {
      // a class without labeled samples: the task conditional is undefined;
      // redraw with the next seed
      continue;
    }
  }
  out.head = trained->head;

  // evaluation on the held-out side
  const std::vector<int>& test_idx = split->test_idx;
  const int nt = static_cast<int>(test_idx.size());
  const int r = base.head.landmark_count();
  Tensor g_test = Tensor::zeros({r, nt});
  for (int c = 0; c < nt; ++c)
    for (int k = 0; k < r; ++k) g_test.at(k, c) = g_all.at(k, test_idx[static_cast<size_t>(c)]);
  const Tensor h_test = task_features(out.head, g_test);

  std::vector<int> truth_labels;
  truth_labels.reserve(test_idx.size());
  for (int i : test_idx) truth_labels.push_back(task_labels[static_cast<size_t>(i)]);

  Tensor scores = output_kernel_matrix(h_test);
  Tensor truth = Tensor::zeros({nt, nt});
  int64_t positives = 0;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b) {
      const bool same = truth_labels[static_cast<size_t>(a)] == truth_labels[static_cast<size_t>(b)];
      truth.at(a, b) = same ? 1.0 : 0.0;
      positives += same;
    }
  const double prior = static_cast<double>(positives) / (static_cast<double>(nt) * nt);
  const PrgCurve curve = prg_curve(scores, truth, prior);
  out.prg_auc = curve.auc;
  {
    std::ostringstream os;
    curve.to_csv(os);
    out.prg_csv = os.str();
  }

  std::vector<int> distinct(task_labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const NmfResult nmf = nmf_ha(h_test, static_cast<int>(distinct.size()), 500,
                               derive_seed(out.seed, "nmf"));
  const MatchResult match = accuracy_with_matching(nmf.labels, truth_labels);
  out.accuracy = match.accuracy;
  {
    std::ostringstream os;
    write_csv_matrix(os, match.confusion);
    out.confusion_csv = os.str();
  }
  return out;
}

inline std::vector<TrialOutcome> run_supervised_trials(const ExperimentConfig& cfg,
                                                       const Model& base, const Dataset& data,
                                                       const std::vector<int>& task_labels,
                                                       std::ostream& log) {
  const Tensor g_all = forward_features(base, data.points);
  std::vector<TrialOutcome> outcomes(static_cast<size_t>(cfg.trials));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(cfg.trials));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const int t = next.fetch_add(1);
        if (t >= cfg.trials || failed.load()) return;
        try {
          outcomes[static_cast<size_t>(t)] =
              run_supervised_trial(cfg, base, data, g_all, task_labels, t);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          failure = e.what();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed.load()) throw std::runtime_error("supervised trials failed: " + failure);
  for (const TrialOutcome& o : outcomes)
    log << "trial " << o.trial << ": prg_auc " << o.prg_auc << ", accuracy " << o.accuracy
        << (o.redraws ? " (redraws " + std::to_string(o.redraws) + ")" : "") << "\n";
  return outcomes;
}

inline void write_trial_artifacts(const std::filesystem::path& dir,
                                  const std::vector<TrialOutcome>& outcomes) {
  double mean_auc = 0.0, mean_acc = 0.0;
  for (const TrialOutcome& o : outcomes) {
    atomic_write_text(dir / ("prg_trial" + std::to_string(o.trial) + ".csv"), o.prg_csv);
    atomic_write_text(dir / ("confusion_trial" + std::to_string(o.trial) + ".csv"),
                      o.confusion_csv);
    save_task_head((dir / ("task_head_trial" + std::to_string(o.trial) + ".neus")).string(),
                   o.head);
    mean_auc += o.prg_auc;
    mean_acc += o.accuracy;
  }
  const double n = static_cast<double>(outcomes.size());
  mean_auc /= n;
  mean_acc /= n;
  double var_auc = 0.0, var_acc = 0.0;
  for (const TrialOutcome& o : outcomes) {
    var_auc += (o.prg_auc - mean_auc) * (o.prg_auc - mean_auc);
    var_acc += (o.accuracy - mean_acc) * (o.accuracy - mean_acc);
  }
  const double std_auc = std::sqrt(var_auc / n);
  const double std_acc = std::sqrt(var_acc / n);
  atomic_write(dir / "accuracy_summary.csv", [&](std::ostream& os) {
    os << "trial,seed,redraws,prg_auc,nmf_ha_accuracy\n";
    for (const TrialOutcome& o : outcomes)
      os << o.trial << ',' << o.seed << ',' << o.redraws << ',' << fmt_double(o.prg_auc) << ','
         << fmt_double(o.accuracy) << '\n';
    os << "mean,,," << fmt_double(mean_auc) << ',' << fmt_double(mean_acc) << '\n';
    os << "std,,," << fmt_double(std_auc) << ',' << fmt_double(std_acc) << '\n';
  });
}

inline void run_episodic_mode(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                              std::ostream& log) {
  RingWalk env(cfg.ring_size, cfg.ring_step, cfg.trajectory, cfg.ring_radius);
  const Tensor states = env.states();
  Model model = init_model(states, model_config_from(cfg, 2), derive_seed(cfg.seed, "init"));
  TrainResult result = train_episodic(env, model, train_config_from(cfg));
  log << "episodic: " << result.epoch_loss.size() << " episodes, final mean loss "
      << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
  atomic_write(dir / "loss_history.csv", [&](std::ostream& os) {
    os << "episode,mean_loss,learning_rate\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
      os << (e + 1) << ',' << fmt_double(result.epoch_loss[e]) << ','
         << fmt_double(result.epoch_lr[e]) << '\n';
  });
  save_model((dir / "checkpoint.neus").string(), model);
  write_feature_artifacts(dir, forward_features(model, states), states);
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Execute a resolved configuration. Throws on runtime failure, leaving the
/// partial-manifest marker in place; on success the marker becomes the final
/// manifest.
inline void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  atomic_write_text(dir / "manifest.partial", manifest_text(cfg));

  if (cfg.mode == "unsupervised") {
    run_unsupervised_phase(cfg, dir, log);
  } else if (cfg.mode == "supervised") {
    UnsupervisedOutcome base = run_unsupervised_phase(cfg, dir, log);
    const std::vector<int>& task_labels = cfg.task == 2 ? base.data.labels_alt : base.data.labels;
    if (task_labels.empty()) throw std::runtime_error("run_experiment: dataset has no labels");
    std::vector<TrialOutcome> outcomes =
        run_supervised_trials(cfg, base.model, base.data, task_labels, log);
    write_trial_artifacts(dir, outcomes);
    if (!cfg.svm_points.empty()) {
      // external classifier operating points pass straight through for plots
      std::ifstream in(cfg.svm_points);
      if (!in) throw std::runtime_error("run_experiment: cannot open '" + cfg.svm_points + "'");
      std::stringstream buf;
      buf << in.rdbuf();
      atomic_write_text(dir / "svm_points.csv", buf.str());
    }
  } else if (cfg.mode == "episodic") {
    run_episodic_mode(cfg, dir, log);
  } else {
    throw std::runtime_error("run_experiment: unknown mode '" + cfg.mode + "'");
  }

  std::filesystem::rename(dir / "manifest.partial", dir / "manifest.txt");
}

/// Re-score an existing checkpoint against the configured dataset.
inline void eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                            std::ostream& log) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  Model model = load_model(checkpoint_path);
  Tensor coords;
  std::optional<ConditionalMatrix> p_in;
  if (cfg.data_kind == "ring") {
    RingWalk env(cfg.ring_size, cfg.ring_step, cfg.trajectory, cfg.ring_radius);
    coords = env.states();
  } else {
    Dataset data = load_dataset(cfg);
    coords = data.points;
    p_in = build_input_probability(cfg, data);
  }
  const Tensor g = forward_features(model, coords);
  write_feature_artifacts(dir, g, coords);
  if (p_in) {
    const int r = g.dim(0);
    std::vector<double> c(static_cast<size_t>(r), 0.0);
    for (int k = 0; k < r; ++k)
      for (int i = 0; i < g.dim(1); ++i) c[static_cast<size_t>(k)] += g.at(k, i);
    const double kl = kl_eval(*p_in, g, c);
    atomic_write_text(dir / "kl.txt", fmt_double(kl) + "\n");
    log << "kl = " << kl << "\n";
  }
}

/// Re-render a heatmap from an exported CSV matrix.
inline void export_heatmap(const std::string& csv_path, const std::string& pgm_path) {
  write_pgm(pgm_path, read_csv_matrix(csv_path));
}

}  // namespace neustrom
