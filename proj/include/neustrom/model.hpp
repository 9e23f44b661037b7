#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/conditional.hpp"
#include "neustrom/kernel.hpp"
#include "neustrom/linalg.hpp"
#include "neustrom/optim.hpp"
#include "neustrom/rng.hpp"
#include "neustrom/tape.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Guard added to the activation norm in the normalizing nonlinearity so an
/// exactly-zero rectified activation keeps the output and gradient finite.
inline constexpr double kSigmaEps = 1e-12;

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

/// Lloyd's algorithm with k-means++ seeding. Deterministic given the seed;
/// runs to centroid shift < tol or max_iters sweeps. An emptied cluster is
/// re-seeded at the point farthest from its assigned centroid.
inline Tensor kmeans(const Tensor& points, int r, uint64_t seed, int max_iters = 300,
                     double tol = 1e-8) {
  if (points.rank() != 2) throw std::invalid_argument("kmeans: points must be n x d");
  const int n = points.dim(0);
  const int d = points.dim(1);
  if (r < 1 || r > n)
    throw std::invalid_argument("kmeans: cluster count " + std::to_string(r) +
                                " must be in [1, n=" + std::to_string(n) + "]");
  Rng rng(seed);

  auto dist2 = [&](const double* a, const double* b) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return acc;
  };
  auto point = [&](int i) { return points.data() + static_cast<size_t>(i) * d; };

  // k-means++ seeding
  Tensor centroids = Tensor::zeros({r, d});
  std::vector<double> best(static_cast<size_t>(n), 0.0);
  std::vector<bool> chosen(static_cast<size_t>(n), false);
  {
    int first = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    std::copy(point(first), point(first) + d, centroids.data());
    chosen[static_cast<size_t>(first)] = true;
    for (int i = 0; i < n; ++i) best[static_cast<size_t>(i)] = dist2(point(i), centroids.data());
    for (int k = 1; k < r; ++k) {
      double total = 0.0;
      for (double b : best) total += b;
      int pick = -1;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (int i = 0; i < n; ++i) {
          u -= best[static_cast<size_t>(i)];
          if (u <= 0.0) {
            pick = i;
            break;
          }
        }
        if (pick < 0) pick = n - 1;
      } else {
        // all remaining mass zero (duplicate points): lowest unchosen index
        for (int i = 0; i < n; ++i)
          if (!chosen[static_cast<size_t>(i)]) {
            pick = i;
            break;
          }
        if (pick < 0) pick = 0;
      }
      chosen[static_cast<size_t>(pick)] = true;
      double* c = centroids.data() + static_cast<size_t>(k) * d;
      std::copy(point(pick), point(pick) + d, c);
      for (int i = 0; i < n; ++i) {
        const double dd = dist2(point(i), c);
        if (dd < best[static_cast<size_t>(i)]) best[static_cast<size_t>(i)] = dd;
      }
    }
  }

  // Lloyd iterations
  std::vector<int> assign(static_cast<size_t>(n), 0);
  Tensor next = Tensor::zeros({r, d});
  std::vector<int> counts(static_cast<size_t>(r), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      double bd = dist2(point(i), centroids.data());
      int bk = 0;
      for (int k = 1; k < r; ++k) {
        const double dd = dist2(point(i), centroids.data() + static_cast<size_t>(k) * d);
        if (dd < bd) {
          bd = dd;
          bk = k;
        }
      }
      assign[static_cast<size_t>(i)] = bk;
    }
    std::fill(next.values().begin(), next.values().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int k = assign[static_cast<size_t>(i)];
      counts[static_cast<size_t>(k)]++;
      double* c = next.data() + static_cast<size_t>(k) * d;
      const double* p = point(i);
      for (int j = 0; j < d; ++j) c[j] += p[j];
    }
    std::vector<bool> claimed(static_cast<size_t>(n), false);
    for (int k = 0; k < r; ++k) {
      double* c = next.data() + static_cast<size_t>(k) * d;
      if (counts[static_cast<size_t>(k)] > 0) {
        for (int j = 0; j < d; ++j) c[j] /= counts[static_cast<size_t>(k)];
      } else {
        // re-seed at the unclaimed point farthest from its centroid
        int far = -1;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          if (claimed[static_cast<size_t>(i)]) continue;
          const double dd = dist2(
              point(i), centroids.data() + static_cast<size_t>(assign[static_cast<size_t>(i)]) * d);
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        claimed[static_cast<size_t>(far)] = true;
        std::copy(point(far), point(far) + d, c);
      }
    }
    double shift = 0.0;
    for (int k = 0; k < r; ++k)
      shift = std::max(shift, dist2(centroids.data() + static_cast<size_t>(k) * d,
                                    next.data() + static_cast<size_t>(k) * d));
    centroids = next;
    if (std::sqrt(shift) < tol) break;
  }
  return centroids;
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

struct EmbeddingConfig {
  int input_dim = 2;
  bool use_rff = true;
  int rff_half_count = 50;    // D; the RFF layer emits 2D features
  double rff_gamma = 1.0;
  bool learn_rff_gamma = false;
  int hidden_dim = 100;
  int output_dim = 100;
};

/// Two affine layers with a shared learnable PReLU slope, optionally fed by a
/// random Fourier feature front end: v = PReLU(A2 PReLU(A1 u + b1) + b2).
struct Embedding {
  EmbeddingConfig config;
  std::optional<RffBank> rff;
  Tensor gamma;  // scalar; live RFF variance parameter (bank keeps the init value)
  Tensor A1, b1, A2, b2;
  Tensor slope;  // scalar PReLU negative slope

  int net_input_dim() const { return config.use_rff ? 2 * config.rff_half_count : config.input_dim; }

  std::vector<double> embed(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != config.input_dim)
      throw std::invalid_argument("embed: input dim " + std::to_string(x.size()) +
                                  " does not match configured " + std::to_string(config.input_dim));
    std::vector<double> u;
    if (config.use_rff) {
      RffBank live = *rff;
      live.gamma = gamma[0];
      u = rff_map(live, x);
    } else {
      u.assign(x.begin(), x.end());
    }
    const double s = slope[0];
    auto layer = [&](const Tensor& A, const Tensor& b, const std::vector<double>& in) {
      const int rows = A.dim(0), cols = A.dim(1);
      std::vector<double> out(static_cast<size_t>(rows));
      for (int i = 0; i < rows; ++i) {
        double acc = b[i];
        const double* arow = A.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += arow[j] * in[static_cast<size_t>(j)];
        out[static_cast<size_t>(i)] = acc > 0.0 ? acc : s * acc;
      }
      return out;
    };
    return layer(A2, b2, layer(A1, b1, u));
  }
};

// ---------------------------------------------------------------------------
// Feature heads
// ---------------------------------------------------------------------------

/// k_{W,v}: the kernel evaluated between every landmark (row of W) and v.
inline std::vector<double> kernel_layer(const Tensor& W, std::span<const double> v,
                                        const KernelSpec& spec) {
  const int r = W.dim(0);
  const int d = W.dim(1);
  std::vector<double> k(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    k[static_cast<size_t>(i)] =
        kernel_eval(spec, {W.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)}, v);
  return k;
}

/// Classical Nystrom feature map f_v = (K_WW + eps I)^(-1/2) k_{W,v}.
/// The inverse square root is fixed at construction; with eps = 0 and
/// landmark inputs the reconstruction f_x^T f_y recovers K(x,y) exactly.
struct NystromBaseline {
  Tensor W;
  KernelSpec kernel;
  double eps = 1e-10;
  Tensor inv_sqrt;  // r x r

  NystromBaseline(Tensor landmarks, KernelSpec spec, double epsilon = 1e-10)
      : W(std::move(landmarks)), kernel(spec), eps(epsilon), inv_sqrt(Tensor::zeros({1, 1})) {
    const int r = W.dim(0);
    const int d = W.dim(1);
    Tensor kww = Tensor::zeros({r, r});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        kww.at(i, j) = kernel_eval(kernel,
                                   {W.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)},
                                   {W.data() + static_cast<size_t>(j) * d, static_cast<size_t>(d)});
    inv_sqrt = inverse_sqrt_psd(kww, eps);
  }
};

inline std::vector<double> nystrom_feature(const NystromBaseline& baseline,
                                           std::span<const double> v) {
  const std::vector<double> k = kernel_layer(baseline.W, v, baseline.kernel);
  const int r = baseline.W.dim(0);
  std::vector<double> f(static_cast<size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int j = 0; j < r; ++j) acc += baseline.inv_sqrt.at(i, j) * k[static_cast<size_t>(j)];
    f[static_cast<size_t>(i)] = acc;
  }
  return f;
}

/// Neural Nystrom head: g_v = sigma(M k_{W,v}, sqrt(K(v,v))) with
/// sigma(a, lambda) = lambda [a]_+ / (|[a]_+| + eps).
struct NeuralNystromHead {
  Tensor W;  // r x dim(v)
  Tensor M;  // r x r
  KernelSpec kernel;

  int landmark_count() const { return W.dim(0); }
};

/// sigma(a, lambda) applied in place.
inline void apply_sigma(std::vector<double>& a, double lambda) {
  double nsq = 0.0;
  for (double& x : a) {
    if (x < 0.0) x = 0.0;
    nsq += x * x;
  }
  const double denom = std::sqrt(nsq) + kSigmaEps;
  const double f = lambda / denom;
  for (double& x : a) x *= f;
}

inline std::vector<double> neustrom_feature(const NeuralNystromHead& head,
                                            std::span<const double> v) {
  const std::vector<double> k = kernel_layer(head.W, v, head.kernel);
  const int r = head.landmark_count();
  std::vector<double> a(static_cast<size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    const double* mrow = head.M.data() + static_cast<size_t>(i) * r;
    for (int j = 0; j < r; ++j) acc += mrow[j] * k[static_cast<size_t>(j)];
    a[static_cast<size_t>(i)] = acc;
  }
  apply_sigma(a, std::sqrt(kernel_self(head.kernel, v)));
  return a;
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ModelConfig {
  EmbeddingConfig embedding;
  int landmarks = 40;
  KernelSpec kernel;  // output-side kernel (gamma defaults to 1)
};

struct Model {
  ModelConfig config;
  Embedding embedding;
  NeuralNystromHead head;

  ParamRefs params() {
    ParamRefs p = {{"emb.A1", &embedding.A1}, {"emb.b1", &embedding.b1},
                   {"emb.A2", &embedding.A2}, {"emb.b2", &embedding.b2},
                   {"emb.slope", &embedding.slope}, {"head.W", &head.W},
                   {"head.M", &head.M}};
    if (embedding.config.use_rff && embedding.config.learn_rff_gamma)
      p.emplace_back("emb.rff_gamma", &embedding.gamma);
    return p;
  }

  /// g for a single input point.
  std::vector<double> features(std::span<const double> x) const {
    return neustrom_feature(head, embedding.embed(x));
  }
};

/// Embedding-network weights drawn uniform in +-sqrt(1/fan_in); PReLU slope
/// starts at 0.25 and the RFF variance at its configured init.
inline Embedding init_embedding(const EmbeddingConfig& cfg, uint64_t seed) {
  Embedding e;
  e.config = cfg;
  Rng rng(derive_seed(seed, "embedding-weights"));
  if (cfg.use_rff) {
    e.rff = rff_sample(cfg.input_dim, cfg.rff_half_count, cfg.rff_gamma, derive_seed(seed, "rff"));
    e.gamma = Tensor::scalar(cfg.rff_gamma);
  } else {
    e.gamma = Tensor::scalar(1.0);
  }
  const int in1 = cfg.use_rff ? 2 * cfg.rff_half_count : cfg.input_dim;
  const double s1 = std::sqrt(1.0 / in1);
  const double s2 = std::sqrt(1.0 / cfg.hidden_dim);
  e.A1 = Tensor::uniform({cfg.hidden_dim, in1}, -s1, s1, rng);
  e.b1 = Tensor::uniform({cfg.hidden_dim}, -s1, s1, rng);
  e.A2 = Tensor::uniform({cfg.output_dim, cfg.hidden_dim}, -s2, s2, rng);
  e.b2 = Tensor::uniform({cfg.output_dim}, -s2, s2, rng);
  e.slope = Tensor::scalar(0.25);
  return e;
}

/// Embeddings of every dataset row (n x output_dim), host math.
inline Tensor forward_embeddings(const Model& model, const Tensor& data) {
  const int n = data.dim(0);
  const int d = data.dim(1);
  const int out = model.embedding.config.output_dim;
  Tensor v = Tensor::zeros({n, out});
  for (int i = 0; i < n; ++i) {
    const std::vector<double> vi =
        model.embedding.embed({data.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)});
    std::copy(vi.begin(), vi.end(), v.data() + static_cast<size_t>(i) * out);
  }
  return v;
}

/// Feature matrix G (r x n): column i is g for dataset row i.
inline Tensor forward_features(const Model& model, const Tensor& data) {
  const int n = data.dim(0);
  const int d = data.dim(1);
  const int r = model.head.landmark_count();
  Tensor g = Tensor::zeros({r, n});
  for (int i = 0; i < n; ++i) {
    const std::vector<double> gi =
        model.features({data.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)});
    for (int k = 0; k < r; ++k) g.at(k, i) = gi[static_cast<size_t>(k)];
  }
  return g;
}

/// Model construction per the initialization recipe: random embedding, one
/// forward pass of the untrained embedding over the data, landmarks at the
/// k-means centroids of those embeddings, readout M = I.
inline Model init_model(const Tensor& data, const ModelConfig& cfg, uint64_t seed) {
  if (data.dim(1) != cfg.embedding.input_dim)
    throw std::invalid_argument("init_model: data dim " + std::to_string(data.dim(1)) +
                                " does not match embedding input dim " +
                                std::to_string(cfg.embedding.input_dim));
  Model m;
  m.config = cfg;
  m.embedding = init_embedding(cfg.embedding, seed);
  const Tensor v = forward_embeddings(m, data);
  m.head.W = kmeans(v, cfg.landmarks, derive_seed(seed, "kmeans"));
  m.head.M = Tensor::identity(cfg.landmarks);
  m.head.kernel = cfg.kernel;
  return m;
}

// ---------------------------------------------------------------------------
// Tape graph builders (batched forward for training)
// ---------------------------------------------------------------------------

/// Tape handles for every trainable tensor of a model.
struct ModelBinding {
  VarId A1, b1, A2, b2, slope;
  VarId gamma;  // invalid unless the RFF variance is learnable
  VarId W, M;

  std::vector<std::pair<std::string, VarId>> named() const {
    std::vector<std::pair<std::string, VarId>> v = {{"emb.A1", A1}, {"emb.b1", b1},
                                                    {"emb.A2", A2}, {"emb.b2", b2},
                                                    {"emb.slope", slope}, {"head.W", W},
                                                    {"head.M", M}};
    if (gamma.valid()) v.emplace_back("emb.rff_gamma", gamma);
    return v;
  }
};

inline ModelBinding bind_model(Tape& tape, const Model& model) {
  ModelBinding b;
  b.A1 = tape.leaf(model.embedding.A1, true);
  // biases enter as column matrices so the per-column broadcast is an outer
  // product with a ones row
  b.b1 = tape.leaf(Tensor({model.embedding.b1.dim(0), 1}, model.embedding.b1.values()), true);
  b.A2 = tape.leaf(model.embedding.A2, true);
  b.b2 = tape.leaf(Tensor({model.embedding.b2.dim(0), 1}, model.embedding.b2.values()), true);
  b.slope = tape.leaf(model.embedding.slope, true);
  if (model.embedding.config.use_rff && model.embedding.config.learn_rff_gamma)
    b.gamma = tape.leaf(model.embedding.gamma, true);
  b.W = tape.leaf(model.head.W, true);
  b.M = tape.leaf(model.head.M, true);
  return b;
}

/// Host-side RFF features for a batch of input columns, using the model's
/// live gamma. X_cols is input_dim x B; the result is 2D x B.
inline Tensor rff_columns(const Model& model, const Tensor& x_cols) {
  const RffBank& bank = *model.embedding.rff;
  const int d = bank.input_dim;
  const int D = bank.half_count;
  const int B = x_cols.dim(1);
  const double root_gamma = std::sqrt(2.0 * model.embedding.gamma[0]);
  const double norm = 1.0 / std::sqrt(static_cast<double>(D));
  Tensor u = Tensor::zeros({2 * D, B});
  for (int l = 0; l < D; ++l) {
    const double* w = bank.base_freqs.data() + static_cast<size_t>(l) * d;
    for (int b = 0; b < B; ++b) {
      double proj = 0.0;
      for (int i = 0; i < d; ++i) proj += w[i] * x_cols.at(i, b);
      proj *= root_gamma;
      u.at(l, b) = norm * std::cos(proj);
      u.at(D + l, b) = norm * std::sin(proj);
    }
  }
  return u;
}

/// Column-wise sigma(a, 1) on a tape: rectify, then normalize each column by
/// its guarded Euclidean norm.
inline VarId build_sigma_graph(Tape& t, VarId a, int r, int batch) {
  VarId rpos = t.relu(a);
  VarId nsq = t.matmul(t.constant({1, r}, 1.0), t.mul(rpos, rpos));  // 1 x B
  VarId denom = t.add(t.sqrt(nsq), t.constant({}, kSigmaEps));
  VarId inv = t.divide(t.constant({1, batch}, 1.0), denom);
  return t.mul(rpos, t.matmul(t.constant({r, 1}, 1.0), inv));
}

/// Feature graph from pre-embedded input columns (RFF already applied or no
/// RFF configured). Returns G: r x B.
inline VarId build_feature_graph_preembedded(Tape& t, const Model& model, const ModelBinding& b,
                                             VarId u, int batch) {
  VarId ones_row = t.constant({1, batch}, 1.0);
  const int out = model.embedding.config.output_dim;
  const int r = model.head.landmark_count();

  VarId h1 = t.prelu(t.add(t.matmul(b.A1, u), t.matmul(b.b1, ones_row)), b.slope);
  VarId v = t.prelu(t.add(t.matmul(b.A2, h1), t.matmul(b.b2, ones_row)), b.slope);

  const KernelSpec& spec = model.head.kernel;
  VarId s = t.matmul(b.W, v);  // r x B of landmark-point inner products
  VarId karr;
  VarId lambda_row;  // 1 x B, only for input-dependent K(v,v)
  if (spec.kind == KernelKind::kRbf) {
    VarId wsq = t.matmul(t.mul(b.W, b.W), t.constant({out, 1}, 1.0));       // r x 1
    VarId vsq = t.matmul(t.constant({1, out}, 1.0), t.mul(v, v));           // 1 x B
    VarId d2 = t.add(t.add(t.matmul(wsq, ones_row), t.matmul(t.constant({r, 1}, 1.0), vsq)),
                     t.scale(s, -2.0));
    karr = t.exp(t.scale(d2, -spec.gamma));
  } else {
    karr = t.exp(s);
    VarId vsq = t.matmul(t.constant({1, out}, 1.0), t.mul(v, v));
    lambda_row = t.exp(t.scale(vsq, 0.5));  // sqrt(exp(|v|^2))
  }

  VarId g = build_sigma_graph(t, t.matmul(b.M, karr), r, batch);
  if (lambda_row.valid()) g = t.mul(g, t.matmul(t.constant({r, 1}, 1.0), lambda_row));
  return g;
}

/// Feature graph from raw input columns (applies the RFF front end when
/// configured). With a frozen RFF variance the trigonometric features are
/// computed off-tape; with a learnable variance they are recorded so the
/// gradient reaches gamma through the sqrt(gamma)-scaled frequencies.
inline VarId build_feature_graph(Tape& t, const Model& model, const ModelBinding& b,
                                 const Tensor& x_cols) {
  const int batch = x_cols.dim(1);
  const EmbeddingConfig& cfg = model.embedding.config;
  VarId u;
  if (!cfg.use_rff) {
    u = t.leaf(x_cols, false);
  } else if (!cfg.learn_rff_gamma) {
    u = t.leaf(rff_columns(model, x_cols), false);
  } else {
    const RffBank& bank = *model.embedding.rff;
    Tensor base(Shape{bank.half_count, bank.input_dim}, bank.base_freqs);
    VarId z = t.matmul(t.leaf(base, false), t.leaf(x_cols, false));  // D x B, constant
    VarId scaled = t.mul(t.scale(z, std::sqrt(2.0)), t.sqrt(b.gamma));
    u = t.scale(t.concat(t.cos(scaled), t.sin(scaled), 0),
                1.0 / std::sqrt(static_cast<double>(bank.half_count)));
  }
  return build_feature_graph_preembedded(t, model, b, u, batch);
}

}  // namespace neustrom
