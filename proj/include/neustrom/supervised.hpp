#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/conditional.hpp"
#include "neustrom/model.hpp"
#include "neustrom/train.hpp"

namespace neustrom {

/// Class-specific readout stacked on a frozen base model:
/// h^(k) = sigma(M^(k) g_x, 1). M^(k) is the only trainable parameter.
struct TaskHead {
  int task_id = 0;
  Tensor m;  // r x r
};

/// h columns for precomputed base feature columns (r x m).
inline Tensor task_features(const TaskHead& head, const Tensor& g_cols) {
  const int r = g_cols.dim(0);
  const int n = g_cols.dim(1);
  Tensor h = Tensor::zeros({r, n});
  std::vector<double> a(static_cast<size_t>(r));
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < r; ++i) {
      double acc = 0.0;
      const double* mrow = head.m.data() + static_cast<size_t>(i) * r;
      for (int j = 0; j < r; ++j) acc += mrow[j] * g_cols.at(j, col);
      a[static_cast<size_t>(i)] = acc;
    }
    apply_sigma(a, 1.0);
    for (int i = 0; i < r; ++i) h.at(i, col) = a[static_cast<size_t>(i)];
  }
  return h;
}

/// h for a single raw input, through the frozen base.
inline std::vector<double> task_feature(const TaskHead& head, const Model& base,
                                        std::span<const double> x) {
  const std::vector<double> g = base.features(x);
  const int r = static_cast<int>(g.size());
  std::vector<double> a(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    const double* mrow = head.m.data() + static_cast<size_t>(i) * r;
    for (int j = 0; j < r; ++j) acc += mrow[j] * g[static_cast<size_t>(j)];
    a[static_cast<size_t>(i)] = acc;
  }
  apply_sigma(a, 1.0);
  return a;
}

struct TaskTrainOutput {
  TaskHead head;
  TrainResult result;
};

/// Train a task head against the label-derived conditional over the labeled
/// subset only. The base model is read-only: its features for the labeled
/// points are computed once up front and enter every step as constants, so
/// gradients reach M^(k) and nothing else. The optimization itself is the
/// finite-data accumulator loop with g replaced by h and p_in by p^(k).
inline TaskTrainOutput train_task(const Model& base, const Tensor& data,
                                  std::span<const int> labeled_idx, std::span<const int> labels,
                                  const TrainConfig& cfg, int task_id = 0,
                                  const TrainHooks* hooks = nullptr) {
  if (labeled_idx.empty()) throw std::invalid_argument("train_task: labeled subset is empty");
  if (labeled_idx.size() != labels.size())
    throw std::invalid_argument("train_task: index/label count mismatch");
  {
    std::vector<int> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2)
      throw std::invalid_argument(
          "train_task: labels cover a single class; the task conditional is degenerate");
  }
  const int m = static_cast<int>(labeled_idx.size());
  const int d = data.dim(1);
  const int r = base.head.landmark_count();

  Tensor sub = Tensor::zeros({m, d});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) sub.at(i, j) = data.at(labeled_idx[static_cast<size_t>(i)], j);
  const Tensor g_lab = forward_features(base, sub);  // r x m, frozen

  const ConditionalMatrix p_task = build_supervised(std::vector<int>(labels.begin(), labels.end()));

  struct PairRef {
    int i, j;
    double w;
  };
  std::vector<PairRef> pairs;
  for (int i = 0; i < m; ++i)
    for (const auto& e : p_task.row(i)) pairs.push_back({i, e.col, e.p});

  TaskHead head;
  head.task_id = task_id;
  head.m = Tensor::identity(r);

  AmsGrad optimizer;
  PlateauScheduler scheduler(cfg.learning_rate);
  double lr = cfg.learning_rate;
  AccumulatorState acc(r, m);
  Tape tape;
  TrainResult result;

  auto gather_cols = [&](std::span<const int> idx) {
    Tensor out = Tensor::zeros({r, static_cast<int>(idx.size())});
    for (size_t b = 0; b < idx.size(); ++b)
      for (int k = 0; k < r; ++k) out.at(k, static_cast<int>(b)) = g_lab.at(k, idx[b]);
    return out;
  };

  std::vector<int> idx_i, idx_j;
  std::vector<double> weights;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "task-shuffle", static_cast<uint64_t>(epoch)));
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
      VarId mvar = tape.leaf(head.m, true);
      VarId hi = build_sigma_graph(tape, tape.matmul(mvar, tape.leaf(gather_cols(idx_i), false)), r, B);
      VarId hj = build_sigma_graph(tape, tape.matmul(mvar, tape.leaf(gather_cols(idx_j), false)), r, B);

      {
        auto hvals = tape.value(hi);
        std::vector<double> col(static_cast<size_t>(r));
        for (int b = 0; b < B; ++b) {
          const int i = idx_i[static_cast<size_t>(b)];
          if (acc.updated[static_cast<size_t>(i)]) continue;
          for (int k = 0; k < r; ++k)
            col[static_cast<size_t>(k)] = hvals[static_cast<size_t>(k) * B + b];
          acc.encounter(i, col);
          if (hooks && hooks->on_first_encounter) hooks->on_first_encounter(epoch, i, col);
        }
      }

      Tensor c_row(Shape{1, r}, acc.c.values());
      Tensor w_row(Shape{1, B}, weights);
      VarId loss = detail::batch_pair_loss(tape, {hi, hj}, c_row, w_row, r, B);
      tape.backward(loss);
      loss_sum += tape.value_scalar(loss);
      optimizer.apply("task.M", head.m, tape.grad(mvar), lr);
    }

    acc.end_epoch();
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(epoch, acc.c, acc.c_prime);
    const double mean_loss = loss_sum / static_cast<double>(pairs.size());
    result.epoch_loss.push_back(mean_loss);
    result.epoch_lr.push_back(lr);
    const PlateauScheduler::Result sres = scheduler.step(mean_loss);
    lr = sres.lr;
    if (sres.stop) {
      result.stopped_by_scheduler = true;
      break;
    }
  }
  return {std::move(head), std::move(result)};
}

}  // namespace neustrom
