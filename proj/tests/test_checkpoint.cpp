#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "neustrom/checkpoint.hpp"

#include "helpers.hpp"

using namespace neustrom;

TEST_CASE("checkpoints round-trip named tensors") {
  const auto dir = testutil::temp_dir("ckpt");
  Rng rng(1);
  Tensor a = Tensor::gaussian({3, 4}, 1.0, rng);
  Tensor b = Tensor::scalar(0.25);
  save_checkpoint((dir / "t.neus").string(), {{"alpha", &a}, {"beta", &b}});
  auto loaded = load_checkpoint((dir / "t.neus").string());
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded.at("alpha").same_values(a));
  REQUIRE(loaded.at("beta").same_values(b));
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
  const auto dir = testutil::temp_dir("ckpt_err");
  {
    std::ofstream out(dir / "bad.neus", std::ios::binary);
    out << "NOPExxxx";
  }
  REQUIRE_THROWS_WITH(load_checkpoint((dir / "bad.neus").string()),
                      Catch::Matchers::ContainsSubstring("NEUS"));
  // valid header, then a record whose payload is cut short
  Rng rng(2);
  Tensor a = Tensor::gaussian({8}, 1.0, rng);
  save_checkpoint((dir / "full.neus").string(), {{"a", &a}});
  const std::string bytes = testutil::slurp(dir / "full.neus");
  {
    std::ofstream out(dir / "cut.neus", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 12));
  }
  REQUIRE_THROWS_WITH(load_checkpoint((dir / "cut.neus").string()),
                      Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("models reload with identical behavior") {
  Rng rng(3);
  Tensor data = Tensor::gaussian({12, 2}, 1.0, rng);
  ModelConfig cfg;
  cfg.embedding.input_dim = 2;
  cfg.embedding.use_rff = true;
  cfg.embedding.rff_half_count = 6;
  cfg.embedding.hidden_dim = 5;
  cfg.embedding.output_dim = 4;
  cfg.landmarks = 3;
  cfg.kernel = {KernelKind::kRbf, 1.0};
  Model m = init_model(data, cfg, 77);

  const auto dir = testutil::temp_dir("model_ckpt");
  save_model((dir / "m.neus").string(), m);
  Model re = load_model((dir / "m.neus").string());

  for (int round = 0; round < 10; ++round) {
    Tensor x = Tensor::gaussian({2}, 1.0, rng);
    REQUIRE(m.features(x.values()) == re.features(x.values()));
  }
  // saving the reloaded model reproduces the file byte for byte
  save_model((dir / "m2.neus").string(), re);
  REQUIRE(testutil::slurp(dir / "m.neus") == testutil::slurp(dir / "m2.neus"));
}

TEST_CASE("task heads carry their id through the container") {
  const auto dir = testutil::temp_dir("task_ckpt");
  TaskHead head;
  head.task_id = 3;
  head.m = Tensor({2, 2}, {1, 2, 3, 4});
  save_task_head((dir / "task.neus").string(), head);
  TaskHead re = load_task_head((dir / "task.neus").string());
  REQUIRE(re.task_id == 3);
  REQUIRE(re.m.same_values(head.m));
}
