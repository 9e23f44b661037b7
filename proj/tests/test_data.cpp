#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "neustrom/data.hpp"

#include "helpers.hpp"

using namespace neustrom;

TEST_CASE("square grid has side^2 points at the lattice spacing") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kSquareGrid;
  spec.side = 5;
  spec.spacing = 0.7;
  spec.noise = 0.0;
  Dataset d = gen_synthetic(spec);
  REQUIRE(d.points.dim(0) == 25);
  double min_dist = 1e300;
  for (int i = 0; i < 25; ++i)
    for (int j = i + 1; j < 25; ++j) {
      const double dx = d.points.at(i, 0) - d.points.at(j, 0);
      const double dy = d.points.at(i, 1) - d.points.at(j, 1);
      min_dist = std::min(min_dist, std::sqrt(dx * dx + dy * dy));
    }
  REQUIRE(min_dist == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("noiseless circle points sit exactly at the radius") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kOneCircle;
  spec.n = 100;
  spec.radius = 2.5;
  spec.noise = 0.0;
  Dataset d = gen_synthetic(spec);
  for (int i = 0; i < 100; ++i) {
    const double norm = std::hypot(d.points.at(i, 0), d.points.at(i, 1));
    REQUIRE(norm == Catch::Approx(2.5).margin(1e-12));
  }
}

TEST_CASE("two-circles labels partition by circle and halves cross circles") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kTwoCircles;
  spec.n = 40;
  spec.radius = 1.0;
  spec.radius2 = 2.0;
  spec.noise = 0.0;
  Dataset d = gen_synthetic(spec);
  REQUIRE(d.points.dim(0) == 80);
  // task 1: circle membership matches the radius exactly
  for (int i = 0; i < 80; ++i) {
    const double norm = std::hypot(d.points.at(i, 0), d.points.at(i, 1));
    REQUIRE(d.labels[static_cast<size_t>(i)] == (norm > 1.5 ? 1 : 0));
  }
  // task 2: both classes present on both circles
  std::set<std::pair<int, int>> combos;
  for (int i = 0; i < 80; ++i)
    combos.insert({d.labels[static_cast<size_t>(i)], d.labels_alt[static_cast<size_t>(i)]});
  REQUIRE(combos.size() == 4);
}

TEST_CASE("generators are deterministic per seed") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kOneCircle;
  spec.n = 50;
  spec.noise = 0.05;
  spec.seed = 42;
  Dataset a = gen_synthetic(spec);
  Dataset b = gen_synthetic(spec);
  REQUIRE(a.points.same_values(b.points));
}

TEST_CASE("idx files round-trip through the fixture writer") {
  const auto dir = testutil::temp_dir("idx");
  std::vector<unsigned char> payload(24);
  for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<unsigned char>(i * 10);
  write_idx((dir / "images.idx").string(), {2, 3, 4}, payload);
  Tensor images = load_idx((dir / "images.idx").string());
  REQUIRE(images.shape() == Shape{2, 3, 4});
  for (int64_t i = 0; i < images.size(); ++i)
    REQUIRE(images[i] == Catch::Approx(payload[static_cast<size_t>(i)] / 255.0).margin(1e-12));

  write_idx((dir / "labels.idx").string(), {5}, {0, 1, 2, 3, 9});
  Tensor labels = load_idx((dir / "labels.idx").string());
  REQUIRE(labels.shape() == Shape{5});
  REQUIRE(labels[4] == 9.0);  // rank-1 payloads are not rescaled
}

TEST_CASE("idx parser distinguishes its error cases") {
  const auto dir = testutil::temp_dir("idx_err");
  // truncated payload: header says 10 bytes, file carries 4
  {
    std::ofstream out(dir / "trunc.idx", std::ios::binary);
    const unsigned char head[8] = {0, 0, 0x08, 1, 0, 0, 0, 10};
    out.write(reinterpret_cast<const char*>(head), 8);
    out.write("abcd", 4);
  }
  try {
    load_idx((dir / "trunc.idx").string());
    FAIL("expected truncation error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("truncated") != std::string::npos);
    REQUIRE(msg.find("18") != std::string::npos);  // expected byte count
    REQUIRE(msg.find("12") != std::string::npos);  // actual byte count
  }
  // bad magic
  {
    std::ofstream out(dir / "magic.idx", std::ios::binary);
    out.write("\x01\x00\x08\x01", 4);
  }
  REQUIRE_THROWS_WITH(load_idx((dir / "magic.idx").string()),
                      Catch::Matchers::ContainsSubstring("magic"));
  // unsupported type byte
  {
    std::ofstream out(dir / "type.idx", std::ios::binary);
    const unsigned char head[8] = {0, 0, 0x0D, 1, 0, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(head), 8);
  }
  REQUIRE_THROWS_WITH(load_idx((dir / "type.idx").string()),
                      Catch::Matchers::ContainsSubstring("type"));
}

TEST_CASE("labeled splits are disjoint, exhaustive and reproducible") {
  LabeledSplit s = split_labeled(10, 0.5, 3);
  REQUIRE(s.train_idx.size() == 5);
  REQUIRE(s.test_idx.size() == 5);
  std::set<int> all(s.train_idx.begin(), s.train_idx.end());
  all.insert(s.test_idx.begin(), s.test_idx.end());
  REQUIRE(all.size() == 10);
  LabeledSplit again = split_labeled(10, 0.5, 3);
  REQUIRE(s.train_idx == again.train_idx);
  LabeledSplit other = split_labeled(10, 0.5, 4);
  REQUIRE(s.train_idx != other.train_idx);
}

TEST_CASE("ten percent of the digits-sized pool rounds to 180 points") {
  LabeledSplit s = split_labeled(1797, 0.1, 9);
  REQUIRE(s.train_idx.size() == 180);
  REQUIRE(s.test_idx.size() == 1797 - 180);
}

TEST_CASE("splits that would empty a side are rejected") {
  REQUIRE_THROWS_AS(split_labeled(10, 0.01, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(split_labeled(10, 0.999, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(split_labeled(10, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(split_labeled(10, 1.0, 1), std::invalid_argument);
}

TEST_CASE("ring walks require at least one step") {
  REQUIRE_THROWS_AS(ring_walk(8, StepKernel{}, 0), std::invalid_argument);
}

TEST_CASE("a stay-put kernel yields constant trajectories") {
  RingWalk env(8, {0.0, 1.0, 0.0}, 5);
  Rng rng(2);
  Tensor traj = env.next_trajectory(rng);
  REQUIRE(traj.dim(0) == 6);
  for (int t = 1; t < 6; ++t) {
    REQUIRE(traj.at(t, 0) == traj.at(0, 0));
    REQUIRE(traj.at(t, 1) == traj.at(0, 1));
  }
}

TEST_CASE("empirical transition frequencies match the step kernel within 2 percent") {
  const StepKernel kernel{0.3, 0.25, 0.45};
  RingWalk env(12, kernel, 100);
  Rng rng(77);
  int64_t left = 0, stay = 0, right = 0, total = 0;
  auto node_of = [&](double x, double y) {
    // recover the ring index from the observation angle
    const double a = std::atan2(y, x);
    const double frac = a / (2.0 * 3.14159265358979323846);
    int idx = static_cast<int>(std::llround(frac * 12.0));
    return ((idx % 12) + 12) % 12;
  };
  for (int episode = 0; episode < 1000; ++episode) {
    Tensor traj = env.next_trajectory(rng);
    for (int t = 1; t <= 100; ++t) {
      const int prev = node_of(traj.at(t - 1, 0), traj.at(t - 1, 1));
      const int cur = node_of(traj.at(t, 0), traj.at(t, 1));
      const int delta = ((cur - prev) % 12 + 12) % 12;
      if (delta == 11)
        ++left;
      else if (delta == 0)
        ++stay;
      else if (delta == 1)
        ++right;
      ++total;
    }
  }
  REQUIRE(total == 100000);
  REQUIRE(static_cast<double>(left) / total == Catch::Approx(kernel.p_left).margin(0.02));
  REQUIRE(static_cast<double>(stay) / total == Catch::Approx(kernel.p_stay).margin(0.02));
  REQUIRE(static_cast<double>(right) / total == Catch::Approx(kernel.p_right).margin(0.02));
}

TEST_CASE("csv datasets parse with trailing label columns") {
  const auto dir = testutil::temp_dir("csv");
  {
    std::ofstream out(dir / "toy.csv");
    out << "x0,x1,label\n";
    out << "0.5,1.5,0\n";
    out << "-1.0,2.0,1\n";
    out << "3.25,-4.5,1\n";
  }
  Dataset d = load_csv_dataset((dir / "toy.csv").string(), 1);
  REQUIRE(d.points.shape() == Shape{3, 2});
  REQUIRE(d.points.at(2, 1) == -4.5);
  REQUIRE(d.labels == std::vector<int>{0, 1, 1});
}
