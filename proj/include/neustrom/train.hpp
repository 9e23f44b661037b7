#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/conditional.hpp"
#include "neustrom/eval.hpp"
#include "neustrom/model.hpp"
#include "neustrom/optim.hpp"
#include "neustrom/rng.hpp"
#include "neustrom/tape.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// One weighted term of the discretized objective:
///   -weight * log( (g_i.g_j + eps) / (g_i.c + eps) ).
/// The partition surrogate c enters as a plain constant, so no gradient can
/// flow through it.
inline VarId pair_loss(Tape& t, VarId g_i, VarId g_j, const Tensor& c, double weight) {
  VarId c_leaf = t.leaf(c, false);
  VarId eps = t.constant({}, kLogEps);
  VarId num = t.add(t.dot(g_i, g_j), eps);
  VarId den = t.add(t.dot(g_i, c_leaf), eps);
  return t.negate(t.scale(t.log(t.divide(num, den)), weight));
}

/// Host-side value of the same expression (diagnostics and tests).
inline double pair_loss_value(std::span<const double> g_i, std::span<const double> g_j,
                              std::span<const double> c, double weight) {
  double num = 0.0, den = 0.0;
  for (size_t k = 0; k < g_i.size(); ++k) {
    num += g_i[k] * g_j[k];
    den += g_i[k] * c[k];
  }
  return -weight * std::log((num + kLogEps) / (den + kLogEps));
}

// ---------------------------------------------------------------------------
// Shared training plumbing
// ---------------------------------------------------------------------------

/// Partition-function surrogate of the finite-data algorithm. c carries the
/// previous epoch's first-encounter sums plus this epoch's so far; c_prime
/// collects this epoch's only. Both are excluded from backpropagation.
struct AccumulatorState {
  Tensor c;
  Tensor c_prime;
  std::vector<uint8_t> updated;

  AccumulatorState(int r, int n)
      : c(Tensor::zeros({r})), c_prime(Tensor::zeros({r})), updated(static_cast<size_t>(n), 0) {}

  void begin_epoch() { std::fill(updated.begin(), updated.end(), 0); }

  /// First encounter of datapoint i in this epoch: add its current feature
  /// vector to both running sums. Returns false if i was already counted.
  bool encounter(int i, std::span<const double> g) {
    if (updated[static_cast<size_t>(i)]) return false;
    updated[static_cast<size_t>(i)] = 1;
    for (size_t k = 0; k < g.size(); ++k) {
      c[static_cast<int64_t>(k)] += g[k];
      c_prime[static_cast<int64_t>(k)] += g[k];
    }
    return true;
  }

  void end_epoch() {
    c = c_prime;
    std::fill(c_prime.values().begin(), c_prime.values().end(), 0.0);
  }
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-4;
  int batch_size = 10;
  bool kmeans_reinit = false;
  bool track_kl = false;  // per-epoch full-KL diagnostic over the dataset
  uint64_t seed = 0;
  // episodic only
  int episodes = 2000;
  double discount = 0.9;
  double rho = 1.0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-pair loss (or per-episode mean loss)
  std::vector<double> epoch_lr;
  std::vector<double> epoch_kl;    // filled when track_kl is set
  bool stopped_by_scheduler = false;
  int reinit_epoch = -1;
};

/// Observation points for tests and artifact writers.
struct TrainHooks {
  std::function<void(int epoch, int index, std::span<const double> g)> on_first_encounter;
  std::function<void(int epoch, const Tensor& c, const Tensor& c_prime)> on_epoch_end;
  std::function<void(int epoch)> on_reinit;
};

/// beta^(t) = (1 - 1/t)^rho; the first episode fully resets the accumulator.
inline double forgetting_factor(int episode, double rho) {
  if (episode < 1) throw std::invalid_argument("forgetting_factor: episode counter starts at 1");
  return std::pow(1.0 - 1.0 / static_cast<double>(episode), rho);
}

/// Trajectory supplier for episodic training: each call yields a (T+1) x dim
/// matrix of observations. Randomness comes from the caller's stream so runs
/// stay reproducible from one master seed.
class EpisodeSource {
 public:
  virtual ~EpisodeSource() = default;
  virtual int observation_dim() const = 0;
  virtual Tensor next_trajectory(Rng& rng) = 0;
};

namespace detail {

/// Input columns for the embedding net. When the RFF variance is frozen the
/// trigonometric features of every dataset point are computed once and reused
/// across all epochs.
struct InputColumns {
  Tensor cols;           // (net input dim or raw dim) x n
  bool preembedded = false;

  InputColumns(const Model& model, const Tensor& data) {
    const int n = data.dim(0);
    const int d = data.dim(1);
    Tensor raw = Tensor::zeros({d, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) raw.at(j, i) = data.at(i, j);
    const EmbeddingConfig& ec = model.embedding.config;
    if (ec.use_rff && !ec.learn_rff_gamma) {
      cols = rff_columns(model, raw);
      preembedded = true;
    } else {
      cols = std::move(raw);
      preembedded = !ec.use_rff;
    }
  }

  Tensor gather(std::span<const int> idx) const {
    const int d = cols.dim(0);
    Tensor out = Tensor::zeros({d, static_cast<int>(idx.size())});
    for (size_t b = 0; b < idx.size(); ++b)
      for (int j = 0; j < d; ++j) out.at(j, static_cast<int>(b)) = cols.at(j, idx[b]);
    return out;
  }
};

/// Build feature columns for a gathered batch, honoring the precomputation.
inline VarId batch_features(Tape& t, const Model& model, const ModelBinding& bind,
                            const InputColumns& input, std::span<const int> idx) {
  Tensor gathered = input.gather(idx);
  if (input.preembedded)
    return build_feature_graph_preembedded(t, model, bind, t.leaf(gathered, false),
                                           static_cast<int>(idx.size()));
  return build_feature_graph(t, model, bind, gathered);
}

/// 0/1 column-selector matrix (total x wanted).
inline Tensor selector(int total, int offset, int count) {
  Tensor s = Tensor::zeros({total, count});
  for (int b = 0; b < count; ++b) s.at(offset + b, b) = 1.0;
  return s;
}

/// Batches narrower than this run one merged pipeline over the i- and j-side
/// columns and split with selector matmuls; wider batches run two pipelines,
/// which are already efficient at that width.
inline constexpr int kMergedBatchLimit = 32;

struct PairFeatures {
  VarId gi;  // r x B
  VarId gj;  // r x B
};

inline PairFeatures pair_batch_features(Tape& t, const Model& model, const ModelBinding& bind,
                                        const InputColumns& input, std::span<const int> idx_i,
                                        std::span<const int> idx_j) {
  const int B = static_cast<int>(idx_i.size());
  if (B <= kMergedBatchLimit) {
    std::vector<int> merged(idx_i.begin(), idx_i.end());
    merged.insert(merged.end(), idx_j.begin(), idx_j.end());
    VarId g_all = batch_features(t, model, bind, input, merged);
    VarId si = t.leaf(selector(2 * B, 0, B), false);
    VarId sj = t.leaf(selector(2 * B, B, B), false);
    return {t.matmul(g_all, si), t.matmul(g_all, sj)};
  }
  return {batch_features(t, model, bind, input, idx_i),
          batch_features(t, model, bind, input, idx_j)};
}

/// Batched loss: -sum_b w_b log((gi_b.gj_b + eps)/(gi_b.c + eps)).
inline VarId batch_pair_loss(Tape& t, const PairFeatures& f, const Tensor& c_row,
                             const Tensor& weights, int r, int batch) {
  VarId num = t.matmul(t.constant({1, r}, 1.0), t.mul(f.gi, f.gj));  // 1 x B
  VarId den = t.matmul(t.leaf(c_row, false), f.gi);                  // 1 x B
  VarId eps = t.constant({}, kLogEps);
  VarId ratios = t.log(t.divide(t.add(num, eps), t.add(den, eps)));
  return t.negate(t.sum(t.mul(t.leaf(weights, false), ratios)));
}

inline std::map<std::string, Tensor*> param_index(ParamRefs refs) {
  std::map<std::string, Tensor*> m;
  for (auto& [name, ptr] : refs) m.emplace(name, ptr);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Finite-dataset training (accumulator-neuron algorithm)
// ---------------------------------------------------------------------------

/// Refresh the landmarks at the k-means centroids of the current embeddings,
/// keeping the readout M. Used once near convergence; training continues.
inline void kmeans_reinit(Model& model, const Tensor& data, uint64_t seed) {
  const Tensor v = forward_embeddings(model, data);
  model.head.W = kmeans(v, model.head.landmark_count(), seed);
}

/// Stochastic optimization over all supported pairs of a finite dataset.
///
/// Per epoch: the supported pairs (p_in(x_j|x_i) > 0) are shuffled with an
/// epoch-indexed seed and grouped into batches. The first time an index i is
/// encountered in the epoch, its current g_i joins both accumulator sums
/// (no gradient); the optimizer then steps on the batch-summed weighted pair
/// loss evaluated against the updated accumulator. At the epoch boundary
/// c <- c_prime, c_prime <- 0. The plateau scheduler is consulted on the
/// epoch-mean loss and can trigger the optional single k-means
/// re-initialization or stop the run.
inline TrainResult train_finite(const Tensor& data, const ConditionalMatrix& p_in, Model& model,
                                const TrainConfig& cfg, const TrainHooks* hooks = nullptr) {
  const int n = data.dim(0);
  if (p_in.n() != n)
    throw std::invalid_argument("train_finite: p_in has " + std::to_string(p_in.n()) +
                                " rows but the dataset has " + std::to_string(n));
  const int r = model.head.landmark_count();

  struct PairRef {
    int i, j;
    double w;
  };
  std::vector<PairRef> pairs;
  for (int i = 0; i < n; ++i)
    for (const auto& e : p_in.row(i)) pairs.push_back({i, e.col, e.p});

  AmsGrad optimizer;
  PlateauScheduler scheduler(cfg.learning_rate);
  double lr = cfg.learning_rate;
  AccumulatorState acc(r, n);
  auto params = detail::param_index(model.params());

  detail::InputColumns input(model, data);
  Tape tape;
  TrainResult result;
  std::vector<int> idx_i, idx_j;
  std::vector<double> weights;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "pair-shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(pairs);
    acc.begin_epoch();
    double loss_sum = 0.0;

    for (size_t start = 0; start < pairs.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const int B = static_cast<int>(
          std::min(static_cast<size_t>(cfg.batch_size), pairs.size() - start));
      idx_i.clear();
      idx_j.clear();
      weights.clear();
      for (int b = 0; b < B; ++b) {
        const PairRef& p = pairs[start + static_cast<size_t>(b)];
        idx_i.push_back(p.i);
        idx_j.push_back(p.j);
        weights.push_back(p.w);
      }

      tape.reset();
      ModelBinding bind = bind_model(tape, model);
      detail::PairFeatures feats = detail::pair_batch_features(tape, model, bind, input, idx_i, idx_j);

      // first encounters feed the accumulator before the loss is formed,
      // mirroring the per-pair ordering of the algorithm
      {
        auto gi = tape.value(feats.gi);
        std::vector<double> col(static_cast<size_t>(r));
        for (int b = 0; b < B; ++b) {
          const int i = idx_i[static_cast<size_t>(b)];
          if (acc.updated[static_cast<size_t>(i)]) continue;
          for (int k = 0; k < r; ++k) col[static_cast<size_t>(k)] = gi[static_cast<size_t>(k) * B + b];
          acc.encounter(i, col);
          if (hooks && hooks->on_first_encounter) hooks->on_first_encounter(epoch, i, col);
        }
      }

      Tensor c_row(Shape{1, r}, acc.c.values());
      Tensor w_row(Shape{1, B}, weights);
      VarId loss = detail::batch_pair_loss(tape, feats, c_row, w_row, r, B);
      tape.backward(loss);
      loss_sum += tape.value_scalar(loss);

      for (const auto& [name, vid] : bind.named()) {
        auto g = tape.grad(vid);
        optimizer.apply(name, *params.at(name), g, lr);
      }
    }

    acc.end_epoch();
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(epoch, acc.c, acc.c_prime);

    const double mean_loss = loss_sum / static_cast<double>(pairs.size());
    result.epoch_loss.push_back(mean_loss);
    result.epoch_lr.push_back(lr);
    if (cfg.track_kl) {
      const Tensor g = forward_features(model, data);
      std::vector<double> c_full(static_cast<size_t>(r), 0.0);
      for (int k = 0; k < r; ++k)
        for (int i = 0; i < n; ++i) c_full[static_cast<size_t>(k)] += g.at(k, i);
      result.epoch_kl.push_back(kl_eval(p_in, g, c_full));
    }

    const PlateauScheduler::Result sres = scheduler.step(mean_loss);
    const bool reduced = sres.lr < lr;
    lr = sres.lr;
    if (cfg.kmeans_reinit && result.reinit_epoch < 0 && reduced && epoch + 1 < cfg.epochs) {
      kmeans_reinit(model, data, derive_seed(cfg.seed, "kmeans-reinit"));
      result.reinit_epoch = epoch;
      if (hooks && hooks->on_reinit) hooks->on_reinit(epoch);
    }
    if (sres.stop) {
      result.stopped_by_scheduler = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Episodic training
// ---------------------------------------------------------------------------

/// Online optimization from sampled trajectories. Per episode t the
/// accumulator decays as c <- beta^(t) c + g_{x_0} (no gradient, values at
/// episode start), then each within-trajectory step t' takes an optimizer
/// step on -discount^t' log(g_{x_0}.g_{x_t'} / g_{x_0}.c). The conditional
/// being approximated is never materialized; only samples of it are used.
inline TrainResult train_episodic(EpisodeSource& source, Model& model, const TrainConfig& cfg,
                                  const TrainHooks* hooks = nullptr) {
  const int r = model.head.landmark_count();
  const int d = source.observation_dim();
  if (d != model.embedding.config.input_dim)
    throw std::invalid_argument("train_episodic: observation dim does not match the embedding");
  AmsGrad optimizer;
  const double lr = cfg.learning_rate;
  Tensor c = Tensor::zeros({r});
  Rng traj_rng(derive_seed(cfg.seed, "episodes"));
  auto params = detail::param_index(model.params());
  Tape tape;
  TrainResult result;

  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    const Tensor traj = source.next_trajectory(traj_rng);
    if (traj.rank() != 2 || traj.dim(0) < 2)
      throw std::invalid_argument("train_episodic: trajectory must contain at least 2 observations");
    if (traj.dim(1) != d)
      throw std::invalid_argument("train_episodic: trajectory observation dim mismatch");
    const int T = traj.dim(0) - 1;

    // accumulator update with the episode-start parameters, outside the tape
    {
      const std::vector<double> g0 =
          model.features({traj.data(), static_cast<size_t>(d)});
      const double beta = forgetting_factor(episode, cfg.rho);
      for (int k = 0; k < r; ++k) c[k] = beta * c[k] + g0[static_cast<size_t>(k)];
    }
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(episode, c, c);

    double episode_loss = 0.0;
    double disc = 1.0;
    for (int step = 1; step <= T; ++step) {
      disc *= cfg.discount;
      tape.reset();
      ModelBinding bind = bind_model(tape, model);
      Tensor x_pair = Tensor::zeros({d, 2});
      for (int j = 0; j < d; ++j) {
        x_pair.at(j, 0) = traj.at(0, j);
        x_pair.at(j, 1) = traj.at(step, j);
      }
      VarId g_all = build_feature_graph(tape, model, bind, x_pair);
      VarId gi = tape.matmul(g_all, tape.leaf(detail::selector(2, 0, 1), false));
      VarId gj = tape.matmul(g_all, tape.leaf(detail::selector(2, 1, 1), false));
      Tensor c_row(Shape{1, r}, c.values());
      Tensor w_row(Shape{1, 1}, {disc});
      VarId loss = detail::batch_pair_loss(tape, {gi, gj}, c_row, w_row, r, 1);
      tape.backward(loss);
      episode_loss += tape.value_scalar(loss);
      for (const auto& [name, vid] : bind.named())
        optimizer.apply(name, *params.at(name), tape.grad(vid), lr);
    }
    result.epoch_loss.push_back(episode_loss / static_cast<double>(T));
    result.epoch_lr.push_back(lr);
  }
  return result;
}

}  // namespace neustrom
