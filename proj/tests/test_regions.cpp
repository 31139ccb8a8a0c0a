#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"

using namespace scaleset;

TEST_CASE("squared error matches the direct formula") {
  RegionStats s;
  s.area = 3;
  s.sum[0] = 6;  // values 1,2,3
  s.sumsq = 14;
  CHECK(squared_error(s) == Catch::Approx(2.0).margin(1e-12));

  // Constant region: exactly zero even with rounding pressure.
  RegionStats c;
  c.area = 4;
  c.sum[0] = 4 * 0.1;
  c.sumsq = 4 * 0.1 * 0.1;
  CHECK(squared_error(c) >= 0.0);
}

TEST_CASE("merge_stats fuses areas, sums and perimeter") {
  RegionStats a;
  a.area = 2;
  a.sum[0] = 10;
  a.sumsq = 52;
  a.perimeter = 6;
  RegionStats b;
  b.area = 1;
  b.sum[0] = 7;
  b.sumsq = 49;
  b.perimeter = 4;
  RegionStats m = merge_stats(a, b, 1.0);
  CHECK(m.area == 3.0);
  CHECK(m.sum[0] == 17.0);
  CHECK(m.sumsq == 101.0);
  CHECK(m.perimeter == 8.0);  // 6 + 4 - 2*1

  try {
    merge_stats(a, b, 0.0);
    FAIL("expected throw");
  } catch (const error& e) {
    CHECK(e.code() == errc::non_adjacent_merge);
  }
}

TEST_CASE("region graph of a grid counts pixels and boundary lengths") {
  // 2x2 pixel grid, one region per pixel.
  RasterImage img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.data = {0, 10, 20, 30};
  LabelMap m = oracle::grid_partition(2, 2);
  Rag g = build_rag(img, m);
  REQUIRE(g.vertex_count() == 4);
  CHECK(g.edge_count() == 4);
  for (std::uint32_t v = 0; v < 4; ++v) {
    CHECK(g.stats(v).area == 1.0);
    CHECK(g.stats(v).perimeter == 4.0);
  }
  CHECK(g.shared_length(0, 1) == 1.0);
  CHECK(g.shared_length(0, 3) == 0.0);  // diagonal: not adjacent
  CHECK(mean_gradient(oracle::link_between(g, 0, 1)) == Catch::Approx(10.0));
  CHECK(mean_gradient(oracle::link_between(g, 1, 3)) == Catch::Approx(20.0));
}

TEST_CASE("perimeters include the image border") {
  // Single region covering a 3x2 image.
  RasterImage img;
  img.width = 3;
  img.height = 2;
  img.channels = 1;
  img.data.assign(6, 5.0);
  LabelMap m;
  m.width = 3;
  m.height = 2;
  m.region_count = 1;
  m.labels.assign(6, 0);
  Rag g = build_rag(img, m);
  CHECK(g.stats(0).perimeter == 10.0);  // 2*(3+2)
  CHECK(g.edge_count() == 0);
}

TEST_CASE("perimeter conservation holds on random partitions") {
  oracle::Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::uint32_t> dim(1, 9);
    std::uint32_t w = dim(rng), h = dim(rng);
    RasterImage img = oracle::random_image(rng, w, h, 1, 4);
    LabelMap m = flat_zone_partition(img);
    Rag g = build_rag(img, m);
    double perim_sum = 0.0, area_sum = 0.0;
    for (std::uint32_t v = 0; v < g.vertex_count(); ++v) {
      perim_sum += g.stats(v).perimeter;
      area_sum += g.stats(v).area;
    }
    double shared_sum = 0.0;
    for (const auto& e : g.edges()) shared_sum += e.shared_len;
    // Every interior boundary unit is counted once in two perimeters.
    CHECK(perim_sum == Catch::Approx(2.0 * (w + h) + 2.0 * shared_sum).margin(1e-9));
    CHECK(area_sum == double(w) * h);
  }
}

TEST_CASE("neighbor lists are sorted and symmetric") {
  oracle::Rng rng(11);
  RasterImage img = oracle::random_image(rng, 6, 6, 1, 3);
  LabelMap m = flat_zone_partition(img);
  Rag g = build_rag(img, m);
  for (std::uint32_t v = 0; v < g.vertex_count(); ++v) {
    std::uint32_t prev = 0;
    bool first = true;
    for (const auto& l : g.neighbors(v)) {
      if (!first) CHECK(prev < l.id);
      prev = l.id;
      first = false;
      CHECK(g.shared_length(l.id, v) == l.shared_len);
    }
  }
}

TEST_CASE("contraction fuses stats and rewires edges") {
  // 1x4 image, one region per pixel: 0-1-2-3 path.
  RasterImage img;
  img.width = 4;
  img.height = 1;
  img.channels = 1;
  img.data = {0, 10, 20, 40};
  LabelMap m = oracle::grid_partition(4, 1);
  Rag g = build_rag(img, m);

  Rag::Contraction c = g.contract({{1, 2}});
  REQUIRE(c.graph.vertex_count() == 3);
  // Groups keep the smallest old id; untouched vertices renumber around them.
  CHECK(c.vertex_map[0] == 0);
  CHECK(c.vertex_map[1] == c.vertex_map[2]);
  CHECK(c.vertex_map[3] != c.vertex_map[1]);

  std::uint32_t mid = c.vertex_map[1];
  CHECK(c.graph.stats(mid).area == 2.0);
  CHECK(c.graph.stats(mid).perimeter == 4.0 + 4.0 - 2.0);
  CHECK(c.graph.stats(mid).sum[0] == 30.0);
  CHECK(c.graph.edge_count() == 2);
  CHECK(c.graph.shared_length(c.vertex_map[0], mid) == 1.0);
}

TEST_CASE("contraction accumulates parallel boundary segments") {
  // 2x2 grid; merge the left column against the right column.
  RasterImage img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.data = {0, 10, 0, 30};
  LabelMap m = oracle::grid_partition(2, 2);
  Rag g = build_rag(img, m);
  Rag::Contraction c = g.contract({{0, 2}, {1, 3}});
  REQUIRE(c.graph.vertex_count() == 2);
  std::uint32_t l = c.vertex_map[0], r = c.vertex_map[1];
  CHECK(c.graph.shared_length(l, r) == 2.0);
  // Gradient sums fuse: |0-10| + |0-30|.
  bool found = false;
  for (const auto& e : c.graph.edges())
    if ((e.u == l && e.v == r) || (e.u == r && e.v == l)) {
      CHECK(e.grad_sum == Catch::Approx(40.0));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("contraction rejects bad groups") {
  RasterImage img;
  img.width = 3;
  img.height = 1;
  img.channels = 1;
  img.data = {0, 10, 20};
  LabelMap m = oracle::grid_partition(3, 1);
  Rag g = build_rag(img, m);

  auto code_of = [&](std::vector<std::vector<std::uint32_t>> groups) {
    try {
      g.contract(groups);
    } catch (const error& e) {
      return e.code();
    }
    FAIL("expected throw");
    return errc::io_failure;
  };
  CHECK(code_of({{0, 2}}) == errc::disconnected_group);  // 0 and 2 not adjacent
  CHECK(code_of({{0, 5}}) == errc::invalid_subset);
  CHECK(code_of({{0, 0}}) == errc::invalid_subset);
  CHECK(code_of({{}}) == errc::invalid_subset);
  CHECK(code_of({{0, 1}, {1, 2}}) == errc::invalid_subset);  // overlapping groups
}

TEST_CASE("color gradients use euclidean distance") {
  RasterImage img;
  img.width = 2;
  img.height = 1;
  img.channels = 3;
  img.data = {0, 0, 0, 3, 4, 0};
  LabelMap m = oracle::grid_partition(2, 1);
  Rag g = build_rag(img, m);
  CHECK(mean_gradient(oracle::link_between(g, 0, 1)) == Catch::Approx(5.0));
}
