#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "regionstyle/error.hpp"
#include "regionstyle/mask.hpp"
#include "test_support.hpp"

using namespace regionstyle;
using testing_support::bit_equal;
using testing_support::error_of;

namespace {

AttentionMap random_logits(std::mt19937& rng, std::size_t rows, std::size_t cols) {
  return AttentionMap{oracle::random_matrix(rng, rows, cols, -4.0f, 4.0f)};
}

bool same(const AttentionMap& a, const AttentionMap& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && bit_equal(a.scores.values(), b.scores.values());
}

std::vector<DownsampledPair> random_pairs(std::mt19937& rng, Grid cg, Grid sg, std::size_t n) {
  std::vector<DownsampledPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({oracle::random_cells(rng, cg, 0.4, false), oracle::random_cells(rng, sg, 0.4, true)});
  }
  return pairs;
}

}  // namespace

TEST_CASE("downsample examples") {
  CHECK(downsample_mask(Mask::full(10, 7), {3, 2}, 4, MaskRole::Style) == DownsampledMask::full({3, 2}));

  Mask block(4, 4);
  for (std::size_t y = 2; y < 4; ++y)
    for (std::size_t x = 0; x < 2; ++x) block.set(y, x);
  CHECK(downsample_mask(block, {2, 2}, 2, MaskRole::Content) == DownsampledMask::from_cells({2, 2}, {2}));

  Mask row(8, 8);
  for (std::size_t x = 0; x < 8; ++x) row.set(3, x);
  CHECK(error_of([&] { downsample_mask(row, {1, 1}, 8, MaskRole::Style); }) == ErrorCode::MaskTooSmall);
  CHECK(downsample_mask(row, {1, 1}, 8, MaskRole::Content).empty());
  CHECK(downsample_mask(Mask(8, 8), {1, 1}, 8, MaskRole::Style).empty());
}

TEST_CASE("downsample ties count as set and border blocks are clipped") {
  Mask half(2, 2);
  half.set(0, 0);
  half.set(1, 1);
  CHECK(downsample_mask(half, {1, 1}, 2, MaskRole::Content).test(0));

  Mask edge(3, 3);
  edge.set(2, 2);  // 1 of 1 pixels in the bottom-right block
  CHECK(downsample_mask(edge, {2, 2}, 2, MaskRole::Content) == DownsampledMask::from_cells({2, 2}, {3}));

  CHECK(error_of([] { downsample_mask(Mask(9, 9), {2, 2}, 4, MaskRole::Content); }) == ErrorCode::GridMismatch);
}

TEST_CASE("downsample matches the block-vote oracle and is monotone") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng() % 20, w = 1 + rng() % 20, d = 1 + rng() % 5;
    const Grid g{(h + d - 1) / d, (w + d - 1) / d};
    const Mask m = oracle::random_mask(rng, h, w, 0.5);
    const DownsampledMask got = downsample_mask(m, g, d, MaskRole::Content);
    for (std::size_t gy = 0; gy < g.height; ++gy)
      for (std::size_t gx = 0; gx < g.width; ++gx) {
        std::size_t on = 0, total = 0;
        for (std::size_t y = gy * d; y < std::min(h, (gy + 1) * d); ++y)
          for (std::size_t x = gx * d; x < std::min(w, (gx + 1) * d); ++x, ++total) on += m.test(y, x);
        CHECK(got.test(gy * g.width + gx) == (2 * on >= total));
      }

    Mask grown = m;
    for (std::size_t k = 0; k < 5; ++k) grown.set(rng() % h, rng() % w);
    const DownsampledMask bigger = downsample_mask(grown, g, d, MaskRole::Content);
    for (std::size_t p = 0; p < g.cells(); ++p)
      if (got.test(p)) CHECK(bigger.test(p));
  }
}

TEST_CASE("prepare_pairs validates and reports pair indices") {
  const Grid img{8, 8}, grid{2, 2};
  MaskPairSet pairs{{Mask::full(8, 8), Mask::full(8, 8)}, {Mask(8, 8), Mask::full(8, 8)}};
  const PreparedPairs prepared = prepare_pairs(pairs, img, img, grid, grid, 4);
  CHECK(prepared.pairs.size() == 1);
  CHECK(prepared.warnings.size() == 1);

  pairs.push_back({Mask::full(8, 8), Mask(8, 8)});
  try {
    prepare_pairs(pairs, img, img, grid, grid, 4);
    FAIL("expected EmptyStyleMask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyStyleMask);
    CHECK(e.index() == std::optional<std::size_t>(2));
  }

  Mask sliver(8, 8);
  sliver.set(0, 0);
  try {
    prepare_pairs({{Mask::full(8, 8), Mask::full(8, 8)}, {Mask::full(8, 8), sliver}}, img, img, grid, grid, 4);
    FAIL("expected MaskTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MaskTooSmall);
    CHECK(e.index() == std::optional<std::size_t>(1));
  }

  try {
    prepare_pairs({{Mask::full(8, 7), Mask::full(8, 8)}}, img, img, grid, grid, 4);
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimMismatch);
    CHECK(e.index() == std::optional<std::size_t>(0));
  }
}

TEST_CASE("fusion examples") {
  std::mt19937 rng(12);
  const AttentionMap a = random_logits(rng, 4, 6);
  const DownsampledPair full{DownsampledMask::full({2, 2}), DownsampledMask::full({2, 3})};
  CHECK(same(fuse_attention(a, std::span(&full, 1)), a));

  const AttentionMap small{Matrix(2, 2, {0.5f, 1.5f, -1.0f, 2.0f})};
  const std::vector<DownsampledPair> one{{DownsampledMask::from_cells({1, 2}, {0}),
                                          DownsampledMask::from_cells({1, 2}, {1})}};
  const AttentionMap fused = fuse_attention(small, one);
  CHECK(fused(0, 0) == kNegInf);
  CHECK(fused(0, 1) == 1.5f);
  CHECK(fused(1, 0) == -1.0f);
  CHECK(fused(1, 1) == 2.0f);

  const std::vector<DownsampledPair> two{
      {DownsampledMask::from_cells({1, 2}, {0}), DownsampledMask::from_cells({1, 2}, {0})},
      {DownsampledMask::from_cells({1, 2}, {0}), DownsampledMask::from_cells({1, 2}, {1})}};
  CHECK(same(fuse_attention(small, two), fused));
}

TEST_CASE("fusion errors") {
  const AttentionMap a{Matrix(4, 4)};
  const std::vector<DownsampledPair> wrong_grid{{DownsampledMask::full({1, 3}), DownsampledMask::full({2, 2})}};
  CHECK(error_of([&] { fuse_attention(a, wrong_grid); }) == ErrorCode::GridMismatch);
  const std::vector<DownsampledPair> empty_style{
      {DownsampledMask::full({2, 2}), DownsampledMask{{2, 2}, std::vector<std::uint8_t>(4, 0)}}};
  CHECK(error_of([&] { fuse_attention(a, empty_style); }) == ErrorCode::EmptyStyleMask);
}

TEST_CASE("validate_fusion") {
  std::mt19937 rng(13);
  AttentionMap a = random_logits(rng, 3, 3);
  CHECK_NOTHROW(validate_fusion(a));
  for (std::size_t c = 0; c < 3; ++c) a(1, c) = kNegInf;
  try {
    validate_fusion(a);
    FAIL("expected DegenerateRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateRow);
    CHECK(e.index() == std::optional<std::size_t>(1));
  }

  for (int trial = 0; trial < 100; ++trial) {
    const AttentionMap logits = random_logits(rng, 16, 9);
    CHECK_NOTHROW(validate_fusion(fuse_attention(logits, random_pairs(rng, {4, 4}, {3, 3}, 1 + rng() % 4))));
  }
}

TEST_CASE("zero mass outside the effective style mask") {
  std::mt19937 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Grid cg{6, 6}, sg{8, 8};
    const auto pairs = random_pairs(rng, cg, sg, 1 + rng() % 4);
    const AttentionMap logits = random_logits(rng, cg.cells(), sg.cells());
    const AttentionMap fused = fuse_attention(logits, pairs);
    const AttentionMap soft = softmax_rows(fused);
    const AttentionMap plain = softmax_rows(logits);
    for (std::size_t p = 0; p < cg.cells(); ++p) {
      const DownsampledPair* last = nullptr;
      for (const auto& pair : pairs)
        if (pair.content.test(p)) last = &pair;
      if (last == nullptr) {
        CHECK(bit_equal(fused.scores.row(p), logits.scores.row(p)));
        CHECK(bit_equal(soft.scores.row(p), plain.scores.row(p)));
        continue;
      }
      double inside = 0.0;
      for (std::size_t q = 0; q < sg.cells(); ++q) {
        if (last->style.test(q)) {
          inside += soft(p, q);
        } else {
          CHECK(soft(p, q) == 0.0f);
        }
      }
      CHECK(std::abs(inside - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("overwrite semantics match the last-assignment reduction") {
  std::mt19937 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const Grid cg{4, 5}, sg{3, 4};
    const auto pairs = random_pairs(rng, cg, sg, 2 + rng() % 4);
    const AttentionMap logits = random_logits(rng, cg.cells(), sg.cells());

    std::vector<DownsampledPair> reduced;
    for (std::size_t p = 0; p < cg.cells(); ++p) {
      const DownsampledMask* style = nullptr;
      for (const auto& pair : pairs)
        if (pair.content.test(p)) style = &pair.style;
      if (style != nullptr) reduced.push_back({DownsampledMask::from_cells(cg, {p}), *style});
    }
    CHECK(same(fuse_attention(logits, pairs), fuse_attention(logits, reduced)));

    AttentionMap direct = logits;
    for (std::size_t p = 0; p < cg.cells(); ++p) {
      const DownsampledMask* style = nullptr;
      for (const auto& pair : pairs)
        if (pair.content.test(p)) style = &pair.style;
      if (style == nullptr) continue;
      for (std::size_t q = 0; q < sg.cells(); ++q)
        if (!style->test(q)) direct(p, q) = kNegInf;
    }
    CHECK(same(fuse_attention(logits, pairs), direct));

    auto with_superset = pairs;
    DownsampledPair cover{oracle::random_cells(rng, cg, 0.3, false), oracle::random_cells(rng, sg, 0.5, true)};
    for (const auto& pair : pairs)
      for (std::size_t p = 0; p < cg.cells(); ++p)
        if (pair.content.test(p)) cover.content.cells[p] = 1;
    with_superset.push_back(cover);
    CHECK(same(fuse_attention(logits, with_superset), fuse_attention(logits, std::span(&cover, 1))));
  }
}

TEST_CASE("disjoint pairs commute") {
  std::mt19937 rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const Grid cg{5, 5}, sg{4, 4};
    const std::size_t n = 2 + rng() % 3;
    std::vector<DownsampledPair> pairs(n, DownsampledPair{DownsampledMask{cg, std::vector<std::uint8_t>(cg.cells(), 0)},
                                                          DownsampledMask::full(sg)});
    for (std::size_t p = 0; p < cg.cells(); ++p) {
      const std::size_t owner = rng() % (n + 1);
      if (owner < n) pairs[owner].content.cells[p] = 1;
    }
    for (auto& pair : pairs) pair.style = oracle::random_cells(rng, sg, 0.4, true);
    const AttentionMap logits = random_logits(rng, cg.cells(), sg.cells());
    const AttentionMap base = fuse_attention(logits, pairs);
    auto shuffled = pairs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(same(fuse_attention(logits, shuffled), base));
  }
}

TEST_CASE("global adapter with a full style mask is plain adaptive normalization") {
  std::mt19937 rng(17);
  const FeatureMap c(Grid{3, 4}, oracle::random_matrix(rng, 12, 5));
  const FeatureMap s(Grid{4, 2}, oracle::random_matrix(rng, 8, 5, 0.0f, 2.0f));
  const std::vector<DownsampledPair> full{{DownsampledMask::full({3, 4}), DownsampledMask::full({4, 2})}};
  const FeatureMap got = global_masked_adain(c, s, full);
  const FeatureMap none = global_masked_adain(c, s, {});

  const oracle::Dense norm = oracle::instance_norm(oracle::to_dense(c.values()));
  const oracle::Dense sd = oracle::to_dense(s.values());
  for (std::size_t ch = 0; ch < 5; ++ch) {
    double mean = 0.0, var = 0.0;
    for (const auto& row : sd) mean += row[ch];
    mean /= 8.0;
    for (const auto& row : sd) var += (row[ch] - mean) * (row[ch] - mean);
    const double sigma = std::sqrt(var / 8.0);
    for (std::size_t p = 0; p < 12; ++p) {
      const double expected = sigma * norm[p][ch] + mean;
      CHECK(std::abs(got(p, ch) - expected) <= 1e-5);
      CHECK(std::abs(none(p, ch) - expected) <= 1e-5);
    }
  }
}

TEST_CASE("global adapter reproduces constant region statistics") {
  std::mt19937 rng(18);
  const float a = 0.3f, b = 1.7f;
  FeatureMap s(Grid{2, 4}, 2);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t ch = 0; ch < 2; ++ch) s(y * 4 + x, ch) = x < 2 ? a : b;
  const FeatureMap c(Grid{2, 2}, oracle::random_matrix(rng, 4, 2));
  const std::vector<DownsampledPair> pairs{
      {DownsampledMask::from_cells({2, 2}, {0, 3}), DownsampledMask::from_cells({2, 4}, {0, 1, 4, 5})}};
  const FeatureMap out = global_masked_adain(c, s, pairs);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    CHECK(out(0, ch) == a);
    CHECK(out(3, ch) == a);
    CHECK(out(1, ch) != a);
  }

  const std::vector<DownsampledPair> bad{{DownsampledMask::full({2, 2}), DownsampledMask{{2, 4}, std::vector<std::uint8_t>(8, 0)}}};
  CHECK(error_of([&] { global_masked_adain(c, s, bad); }) == ErrorCode::EmptyStyleMask);
}

TEST_CASE("rle examples") {
  CHECK(rle_encode(Mask(2, 2)).runs == std::vector<std::uint32_t>{4});
  CHECK(rle_encode(Mask::full(2, 2)).runs == std::vector<std::uint32_t>{0, 4});
  Mask m(2, 3);
  m.set(0, 1);
  m.set(0, 2);
  m.set(1, 2);
  CHECK(rle_encode(m).runs == std::vector<std::uint32_t>{1, 2, 2, 1});
  CHECK(error_of([] { rle_decode(Rle{2, 2, {1, 2}}); }) == ErrorCode::LengthMismatch);
  CHECK(error_of([] { rle_decode(Rle{2, 2, {1, 2, 3}}); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("rle round trip over random masks") {
  for (std::uint32_t seed = 0; seed < 1000; ++seed) {
    std::mt19937 rng(seed);
    const Mask m = oracle::random_mask(rng, 16, 16, (seed % 10) / 9.0);
    const Rle rle = rle_encode(m);
    CHECK(rle.height == 16);
    CHECK(rle.width == 16);
    REQUIRE(rle_decode(rle) == m);
  }
}
