#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/io.hpp"
#include "neustrom/model.hpp"
#include "neustrom/supervised.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Checkpoint container: magic "NEUS", format version u32, then one record
/// per named tensor until end of file:
///   u32 name length, name bytes, u32 rank, u64 dims, f64 payload.
/// All integers and floats are little-endian.
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const Tensor*>>& entries) {
  atomic_write(
      path,
      [&](std::ostream& os) {
        os.write("NEUS", 4);
        const uint32_t version = kCheckpointVersion;
        os.write(reinterpret_cast<const char*>(&version), 4);
        for (const auto& [name, tensor] : entries) {
          const uint32_t name_len = static_cast<uint32_t>(name.size());
          os.write(reinterpret_cast<const char*>(&name_len), 4);
          os.write(name.data(), static_cast<std::streamsize>(name.size()));
          const uint32_t rank = static_cast<uint32_t>(tensor->rank());
          os.write(reinterpret_cast<const char*>(&rank), 4);
          for (int i = 0; i < tensor->rank(); ++i) {
            const uint64_t dim = static_cast<uint64_t>(tensor->dim(i));
            os.write(reinterpret_cast<const char*>(&dim), 8);
          }
          os.write(reinterpret_cast<const char*>(tensor->data()),
                   static_cast<std::streamsize>(tensor->size() * 8));
        }
      },
      /*binary=*/true);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NEUS", 4) != 0)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a NEUS container");
  uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), 4) || version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported container version in '" + path + "'");
  std::map<std::string, Tensor> out;
  while (true) {
    uint32_t name_len = 0;
    if (!in.read(reinterpret_cast<char*>(&name_len), 4)) break;  // clean EOF
    std::string name(name_len, '\0');
    uint32_t rank = 0;
    if (!in.read(name.data(), name_len) || !in.read(reinterpret_cast<char*>(&rank), 4))
      throw std::runtime_error("load_checkpoint: truncated record in '" + path + "'");
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
      uint64_t dim = 0;
      if (!in.read(reinterpret_cast<char*>(&dim), 8))
        throw std::runtime_error("load_checkpoint: truncated dims in '" + path + "'");
      shape[i] = static_cast<int>(dim);
    }
    std::vector<double> values(static_cast<size_t>(numel(shape)));
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * 8)))
      throw std::runtime_error("load_checkpoint: truncated payload for '" + name + "' in '" +
                               path + "'");
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

/// Model serialization. Besides the parameters, enough metadata tensors are
/// stored to rebuild the model without its original config.
inline void save_model(const std::string& path, const Model& model) {
  const EmbeddingConfig& ec = model.embedding.config;
  Tensor meta_emb({7}, {static_cast<double>(ec.input_dim), ec.use_rff ? 1.0 : 0.0,
                        static_cast<double>(ec.rff_half_count), ec.rff_gamma,
                        ec.learn_rff_gamma ? 1.0 : 0.0, static_cast<double>(ec.hidden_dim),
                        static_cast<double>(ec.output_dim)});
  Tensor meta_kernel({2}, {model.head.kernel.kind == KernelKind::kRbf ? 0.0 : 1.0,
                           model.head.kernel.gamma});
  Tensor rff_base = ec.use_rff ? Tensor({ec.rff_half_count, ec.input_dim},
                                        model.embedding.rff->base_freqs)
                               : Tensor::zeros({1});
  std::vector<std::pair<std::string, const Tensor*>> entries = {
      {"meta.embedding", &meta_emb},
      {"meta.kernel", &meta_kernel},
      {"emb.A1", &model.embedding.A1},
      {"emb.b1", &model.embedding.b1},
      {"emb.A2", &model.embedding.A2},
      {"emb.b2", &model.embedding.b2},
      {"emb.slope", &model.embedding.slope},
      {"emb.rff_gamma", &model.embedding.gamma},
      {"head.W", &model.head.W},
      {"head.M", &model.head.M},
  };
  if (ec.use_rff) entries.emplace_back("emb.rff_base", &rff_base);
  save_checkpoint(path, entries);
}

inline Model load_model(const std::string& path) {
  auto entries = load_checkpoint(path);
  auto need = [&](const std::string& name) -> Tensor& {
    auto it = entries.find(name);
    if (it == entries.end())
      throw std::runtime_error("load_model: '" + path + "' is missing tensor '" + name + "'");
    return it->second;
  };
  const Tensor& me = need("meta.embedding");
  const Tensor& mk = need("meta.kernel");
  Model m;
  EmbeddingConfig ec;
  ec.input_dim = static_cast<int>(me[0]);
  ec.use_rff = me[1] != 0.0;
  ec.rff_half_count = static_cast<int>(me[2]);
  ec.rff_gamma = me[3];
  ec.learn_rff_gamma = me[4] != 0.0;
  ec.hidden_dim = static_cast<int>(me[5]);
  ec.output_dim = static_cast<int>(me[6]);
  m.embedding.config = ec;
  m.embedding.A1 = need("emb.A1");
  m.embedding.b1 = need("emb.b1");
  m.embedding.A2 = need("emb.A2");
  m.embedding.b2 = need("emb.b2");
  m.embedding.slope = need("emb.slope");
  m.embedding.gamma = need("emb.rff_gamma");
  if (ec.use_rff) {
    RffBank bank;
    bank.input_dim = ec.input_dim;
    bank.half_count = ec.rff_half_count;
    bank.gamma = ec.rff_gamma;
    bank.base_freqs = need("emb.rff_base").values();
    m.embedding.rff = std::move(bank);
  }
  m.head.W = need("head.W");
  m.head.M = need("head.M");
  m.head.kernel.kind = mk[0] == 0.0 ? KernelKind::kRbf : KernelKind::kExpDot;
  m.head.kernel.gamma = mk[1];
  m.config.embedding = ec;
  m.config.landmarks = m.head.W.dim(0);
  m.config.kernel = m.head.kernel;
  return m;
}

/// Task-head serialization into the same container, with the task id as a
/// dedicated field.
inline void save_task_head(const std::string& path, const TaskHead& head) {
  Tensor id = Tensor::scalar(static_cast<double>(head.task_id));
  save_checkpoint(path, {{"task.id", &id}, {"task.M", &head.m}});
}

inline TaskHead load_task_head(const std::string& path) {
  auto entries = load_checkpoint(path);
  auto it_id = entries.find("task.id");
  auto it_m = entries.find("task.M");
  if (it_id == entries.end() || it_m == entries.end())
    throw std::runtime_error("load_task_head: '" + path + "' is not a task-head container");
  TaskHead head;
  head.task_id = static_cast<int>(it_id->second[0]);
  head.m = it_m->second;
  return head;
}

}  // namespace neustrom
