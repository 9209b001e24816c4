#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "tubo/rng.hpp"
#include "tubo/series_io.hpp"
#include "tubo/types.hpp"

using namespace tubo;

namespace {

std::string write_temp(const std::string& content) {
  static int counter = 0;
  std::string path = "test_core_tmp_" + std::to_string(counter++) + ".csv";
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

DmSeries ramp_series(int t, int n) {
  DmSeries s(n, 5);
  std::vector<double> row(size_t(n) * n);
  std::vector<uint8_t> mask(size_t(n) * n, 1);
  for (int e = 0; e < t; ++e) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        row[size_t(i) * n + j] = i == j ? 0.0 : 1.0 + e + 0.1 * i + 0.01 * j;
    s.push_epoch(row, mask);
  }
  return s;
}

}  // namespace

TEST_CASE("load_series reads a 2-epoch N=2 file back") {
  const std::string path =
      write_temp("# nodes=2 granularity_min=5\n0,5,3,0\n0,6,2,0\n");
  const DmSeries s = load_series(path);
  CHECK(s.epochs() == 2);
  CHECK(s.nodes() == 2);
  CHECK(s.granularity_minutes() == 5);
  CHECK(s.value(0, 0, 1) == doctest::Approx(5.0));
  CHECK(s.value(0, 1, 0) == doctest::Approx(3.0));
  CHECK(s.value(1, 0, 1) == doctest::Approx(6.0));
  std::remove(path.c_str());
}

TEST_CASE("empty cell becomes a masked position, others present") {
  const std::string path = write_temp("# nodes=2 granularity_min=5\n0,,3,0\n");
  const DmSeries s = load_series(path);
  CHECK(!s.present(0, 0, 1));
  CHECK(s.present(0, 1, 0));
  CHECK(s.present(0, 0, 0));
  std::remove(path.c_str());
}

TEST_CASE("ragged row raises a parse error naming the line") {
  const std::string path = write_temp("# nodes=2 granularity_min=5\n0,5,3\n");
  CHECK_THROWS_WITH_AS(load_series(path), doctest::Contains(":2:"), Error);
  std::remove(path.c_str());
}

TEST_CASE("negative demand and bad header are rejected") {
  const std::string bad_value =
      write_temp("# nodes=2 granularity_min=5\n0,-5,3,0\n");
  CHECK_THROWS_AS(load_series(bad_value), Error);
  std::remove(bad_value.c_str());

  const std::string bad_header = write_temp("nodes=2\n0,5,3,0\n");
  CHECK_THROWS_AS(load_series(bad_header), Error);
  std::remove(bad_header.c_str());
}

TEST_CASE("diagonal entries are forced to zero on load") {
  const std::string path = write_temp("# nodes=2 granularity_min=5\n7,5,3,9\n");
  const DmSeries s = load_series(path);
  CHECK(s.value(0, 0, 0) == 0.0);
  CHECK(s.value(0, 1, 1) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("save/load round trip preserves values to 6 digits and the mask") {
  Rng rng(42);
  DmSeries s(3, 15);
  std::vector<double> row(9);
  std::vector<uint8_t> mask(9);
  for (int e = 0; e < 20; ++e) {
    for (int c = 0; c < 9; ++c) {
      row[c] = rng.u01() * 1000.0;
      mask[c] = rng.u01() < 0.8 ? 1 : 0;
    }
    s.push_epoch(row, mask);
  }
  const std::string path = write_temp("");
  save_series(s, path);
  const DmSeries back = load_series(path);
  REQUIRE(back.epochs() == s.epochs());
  for (int e = 0; e < s.epochs(); ++e)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        REQUIRE(back.present(e, i, j) == s.present(e, i, j));
        if (s.present(e, i, j))
          REQUIRE(back.value(e, i, j) ==
                  doctest::Approx(s.value(e, i, j)).epsilon(1e-6));
      }
  std::remove(path.c_str());
}

TEST_CASE("split follows floor arithmetic") {
  const DmSeries s = ramp_series(10, 2);
  const auto [train, test] = split(s, SplitSpec{0.6});
  CHECK(train.epochs() == 6);
  CHECK(test.epochs() == 4);
  CHECK(train.value(5, 0, 1) == s.value(5, 0, 1));
  CHECK(test.value(0, 0, 1) == s.value(6, 0, 1));
}

TEST_CASE("split of 48096 epochs at 0.6 yields 28857 training epochs") {
  // floor(48096 * 0.6) = 28857
  CHECK(int(std::floor(48096 * 0.6)) == 28857);
  const DmSeries s = ramp_series(100, 2);
  const auto [train, test] = split(s, SplitSpec{0.6});
  CHECK(train.epochs() + test.epochs() == s.epochs());
}

TEST_CASE("degenerate splits fail") {
  const DmSeries one = ramp_series(1, 2);
  CHECK_THROWS_AS(split(one, SplitSpec{0.6}), Error);
  const DmSeries few = ramp_series(3, 2);
  CHECK_THROWS_AS(split(few, SplitSpec{0.01}), Error);
  CHECK_THROWS_AS(split(few, SplitSpec{0.999}), Error);
}

TEST_CASE("split carries masks and preserves the epoch count") {
  Rng rng(7);
  DmSeries s(2, 5);
  std::vector<double> row(4);
  std::vector<uint8_t> mask(4);
  for (int e = 0; e < 17; ++e) {
    for (int c = 0; c < 4; ++c) {
      row[c] = rng.u01();
      mask[c] = rng.u01() < 0.7 ? 1 : 0;
    }
    s.push_epoch(row, mask);
  }
  const auto [train, test] = split(s, SplitSpec{0.6});
  CHECK(train.epochs() + test.epochs() == 17);
  for (int e = 0; e < test.epochs(); ++e)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(test.present(e, i, j) == s.present(train.epochs() + e, i, j));
}

TEST_CASE("window_at covers the requested epochs") {
  const DmSeries s = ramp_series(10, 2);
  const Window w = window_at(s, 9, 3);
  CHECK(w.epoch_of(0) == 7);
  CHECK(w.epoch_of(2) == 9);
  CHECK(w.value(2, 0, 1) == s.value(9, 0, 1));

  const Window boundary = window_at(s, 2, 3);
  CHECK(boundary.epoch_of(0) == 0);

  CHECK_THROWS_AS(window_at(s, 1, 3), Error);
  CHECK_THROWS_AS(window_at(s, 10, 3), Error);
}

TEST_CASE("window_at returns exactly w matrices with last == series[s]") {
  const DmSeries s = ramp_series(24, 3);
  for (int w = 1; w <= 8; ++w)
    for (int e = w - 1; e < s.epochs(); e += 3) {
      const Window win = window_at(s, e, w);
      CHECK(win.length == w);
      CHECK(win.value(w - 1, 0, 2) == s.value(e, 0, 2));
    }
}

TEST_CASE("topology validation rejects bad links") {
  Topology t;
  t.node_count = 3;
  t.links.push_back({0, 1, 10.0, 1.0});
  CHECK_NOTHROW(t.validate());
  t.links.push_back({1, 1, 10.0, 1.0});
  CHECK_THROWS_AS(t.validate(), Error);
  t.links.back() = {1, 2, 0.0, 1.0};
  CHECK_THROWS_AS(t.validate(), Error);
  t.links.back() = {1, 5, 1.0, 1.0};
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("topology json round trip") {
  Topology t;
  t.node_count = 3;
  t.links.push_back({0, 1, 10.5, 1.0});
  t.links.push_back({1, 2, 20.0, 2.5});
  const std::string path = "test_core_topo.json";
  save_topology(t, path);
  const Topology back = load_topology(path);
  CHECK(back.node_count == 3);
  REQUIRE(back.links.size() == 2);
  CHECK(back.links[1].capacity_mbps == doctest::Approx(20.0));
  CHECK(back.links[1].latency == doctest::Approx(2.5));
  std::remove(path.c_str());
}

TEST_CASE("derive_seed separates components and indices") {
  const uint64_t a = derive_seed(1, "alpha", 0);
  const uint64_t b = derive_seed(1, "alpha", 1);
  const uint64_t c = derive_seed(1, "beta", 0);
  const uint64_t d = derive_seed(2, "alpha", 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a == derive_seed(1, "alpha", 0));
}
