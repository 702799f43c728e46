#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "invpt/autograd.hpp"
#include "invpt/conv.hpp"
#include "invpt/norm.hpp"
#include "invpt/ops.hpp"
#include "invpt/rng.hpp"

using namespace invpt;

namespace {

// Independent triple-loop reference used by the matmul checks.
std::vector<double> matmul_reference(std::span<const double> a, std::span<const double> b, int64_t m,
                                     int64_t k, int64_t n) {
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t p = 0; p < k; ++p)
        out[static_cast<size_t>(i * n + j)] +=
            a[static_cast<size_t>(i * k + p)] * b[static_cast<size_t>(p * n + j)];
  return out;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, m);
  CHECK(r.values()[0] == 1);
  CHECK(r.values()[1] == 2);
  CHECK(r.values()[2] == 3);
  CHECK(r.values()[3] == 4);

  Tensor<double> col({2, 1}, {0, 1});
  auto r2 = matmul(m, col);
  CHECK(r2.at({0, 0}) == 2);
  CHECK(r2.at({1, 0}) == 4);

  CHECK_THROWS_AS(matmul(m, Tensor<double>({3, 2})), ShapeError);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  Tensor<double> a = Tensor<double>::uniform({5, 7}, rng, -2, 2);
  Tensor<double> b = Tensor<double>::uniform({7, 3}, rng, -2, 2);
  auto got = matmul(a, b);
  auto want = matmul_reference(a.values(), b.values(), 5, 7, 3);
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got.values()[i] == Catch::Approx(want[static_cast<size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("softmax rows") {
  Tensor<double> x({1, 2}, {0, 0});
  auto y = softmax_rows(x);
  CHECK(y.values()[0] == Catch::Approx(0.5));
  CHECK(y.values()[1] == Catch::Approx(0.5));

  Tensor<double> x2({1, 2}, {std::log(2.0), 0});
  auto y2 = softmax_rows(x2);
  CHECK(y2.values()[0] == Catch::Approx(2.0 / 3.0));
  CHECK(y2.values()[1] == Catch::Approx(1.0 / 3.0));

  Rng rng(3);
  Tensor<double> r = Tensor<double>::uniform({6, 9}, rng, -4, 4);
  auto s = softmax_rows(r);
  for (int64_t i = 0; i < 6; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < 9; ++j) acc += s.at({i, j});
    CHECK(acc == Catch::Approx(1.0).margin(1e-6));
    for (int64_t j = 0; j < 9; ++j) CHECK(s.at({i, j}) >= 0);
  }

  CHECK_THROWS_AS(softmax_rows(Tensor<double>({3, 0})), ShapeError);
}

TEST_CASE("conv2d identity kernel, constant field, stride shapes") {
  Rng rng(5);
  Tensor<double> x = Tensor<double>::uniform({1, 1, 4, 4}, rng, -1, 1);
  Tensor<double> w1({1, 1, 1, 1}, {1.0});
  auto y = conv2d(x, w1, Tensor<double>{}, 1, 0);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);

  Tensor<double> xc = Tensor<double>::full({1, 1, 5, 5}, 2.0);
  Tensor<double> w3 = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto y3 = conv2d(xc, w3, Tensor<double>{}, 1, 1);
  CHECK(y3.at({0, 0, 2, 2}) == Catch::Approx(18.0));  // interior: 9 * v
  CHECK(y3.at({0, 0, 0, 0}) == Catch::Approx(8.0));   // corner sees 4 pad zeros

  Tensor<double> x8({1, 2, 8, 8});
  Tensor<double> w({3, 2, 3, 3});
  auto ys = conv2d(x8, w, Tensor<double>{}, 2, 1);
  CHECK(ys.shape() == Shape{1, 3, 4, 4});

  CHECK_THROWS_AS(conv2d(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 5, 5}), Tensor<double>{}, 1, 0),
                  ShapeError);
}

TEST_CASE("transposed conv analytic cases and adjoint oracle") {
  Tensor<double> x({1, 1, 1, 1}, {3.0});
  Tensor<double> w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto y = transposed_conv2d(x, w, Tensor<double>{}, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (auto v : y.values()) CHECK(v == Catch::Approx(3.0));

  Tensor<double> x8({1, 2, 8, 8});
  Tensor<double> w4({2, 3, 4, 4});
  auto y4 = transposed_conv2d(x8, w4, Tensor<double>{}, 4);
  CHECK(y4.shape() == Shape{1, 3, 32, 32});

  CHECK_THROWS_AS(transposed_conv2d(x8, Tensor<double>({2, 3, 3, 3}), Tensor<double>{}, 3), ShapeError);
  CHECK_THROWS_AS(transposed_conv2d(x8, Tensor<double>({2, 3, 2, 2}), Tensor<double>{}, 4), ShapeError);

  // Adjoint oracle: materialize conv2d(stride=k, pad=0) as a dense matrix via
  // unit inputs, transpose it, and apply to a random vector. The transposed
  // conv with mirrored weight layout must agree.
  Rng rng(7);
  const int64_t c_in = 2, c_out = 3, h = 3, k = 2;
  Tensor<double> wc = Tensor<double>::uniform({c_out, c_in, k, k}, rng, -1, 1);
  const int64_t in_n = c_in * (h * k) * (h * k);
  const int64_t out_n = c_out * h * h;
  std::vector<double> dense(static_cast<size_t>(out_n * in_n), 0.0);
  for (int64_t i = 0; i < in_n; ++i) {
    Tensor<double> unit({1, c_in, h * k, h * k});
    unit.mutable_values()[i] = 1.0;
    auto out = conv2d(unit, wc, Tensor<double>{}, k, 0);
    for (int64_t o = 0; o < out_n; ++o) dense[static_cast<size_t>(o * in_n + i)] = out.values()[o];
  }
  Tensor<double> z = Tensor<double>::uniform({1, c_out, h, h}, rng, -1, 1);
  std::vector<double> want(static_cast<size_t>(in_n), 0.0);
  for (int64_t i = 0; i < in_n; ++i)
    for (int64_t o = 0; o < out_n; ++o) want[static_cast<size_t>(i)] += dense[static_cast<size_t>(o * in_n + i)] * z.values()[o];

  // transposed_conv2d takes [C, O, k, k]: the conv weight's [c_out, c_in]
  // layout already reads as [source, target] for the adjoint direction.
  Tensor<double> wt({c_out, c_in, k, k}, std::vector<double>(wc.values().begin(), wc.values().end()));
  auto got = transposed_conv2d(z, wt, Tensor<double>{}, k);
  REQUIRE(got.numel() == in_n);
  for (int64_t i = 0; i < in_n; ++i)
    CHECK(got.values()[i] == Catch::Approx(want[static_cast<size_t>(i)]).margin(1e-6));
}

TEST_CASE("avg pool") {
  Tensor<double> c = Tensor<double>::full({1, 1, 4, 4}, 7.0);
  auto y = avg_pool2d(c, 2);
  for (auto v : y.values()) CHECK(v == Catch::Approx(7.0));

  Tensor<double> m({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(avg_pool2d(m, 2).item() == Catch::Approx(2.5));

  // Ramp oracle at k=4 on an 8x8 field.
  Tensor<double> ramp({1, 1, 8, 8});
  for (int64_t y8 = 0; y8 < 8; ++y8)
    for (int64_t x8 = 0; x8 < 8; ++x8) ramp.at({0, 0, y8, x8}) = static_cast<double>(y8 * 8 + x8);
  auto p = avg_pool2d(ramp, 4);
  for (int64_t by = 0; by < 2; ++by) {
    for (int64_t bx = 0; bx < 2; ++bx) {
      double acc = 0;
      for (int64_t dy = 0; dy < 4; ++dy)
        for (int64_t dx = 0; dx < 4; ++dx) acc += ramp.at({0, 0, by * 4 + dy, bx * 4 + dx});
      CHECK(p.at({0, 0, by, bx}) == Catch::Approx(acc / 16.0));
    }
  }

  CHECK_THROWS_AS(avg_pool2d(Tensor<double>({1, 1, 6, 6}), 4), ShapeError);
}

TEST_CASE("bilinear upsample 2x") {
  Tensor<double> c = Tensor<double>::full({1, 2, 3, 3}, 4.5);
  auto y = bilinear_upsample2x(c);
  CHECK(y.shape() == Shape{1, 2, 6, 6});
  for (auto v : y.values()) CHECK(v == Catch::Approx(4.5));

  Tensor<double> one({1, 1, 1, 1}, {2.25});
  auto y1 = bilinear_upsample2x(one);
  CHECK(y1.shape() == Shape{1, 1, 2, 2});
  for (auto v : y1.values()) CHECK(v == Catch::Approx(2.25));

  // A linear horizontal ramp stays linear away from the clamped borders:
  // with half-pixel centers dst x maps to source x/2 - 0.25.
  Tensor<double> ramp({1, 1, 2, 8});
  for (int64_t x = 0; x < 8; ++x) {
    ramp.at({0, 0, 0, x}) = static_cast<double>(x);
    ramp.at({0, 0, 1, x}) = static_cast<double>(x);
  }
  auto up = bilinear_upsample2x(ramp);
  for (int64_t x = 2; x < 14; ++x) {
    const double expect = static_cast<double>(x) / 2.0 - 0.25;
    CHECK(up.at({0, 0, 1, x}) == Catch::Approx(expect).margin(1e-6));
  }
}

TEST_CASE("layer norm") {
  Tensor<double> gamma = Tensor<double>::full({4}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({4});

  auto zeroed = layer_norm(Tensor<double>::full({2, 4}, 3.0), gamma, beta);
  for (auto v : zeroed.values()) CHECK(v == Catch::Approx(0.0).margin(1e-9));

  Tensor<double> pm({1, 2}, {-1.0, 1.0});
  auto n = layer_norm(pm, Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}));
  CHECK(n.values()[0] == Catch::Approx(-1.0).margin(1e-4));
  CHECK(n.values()[1] == Catch::Approx(1.0).margin(1e-4));

  Rng rng(9);
  Tensor<double> x = Tensor<double>::uniform({5, 16}, rng, -3, 3);
  auto y = layer_norm(x, Tensor<double>::full({16}, 1.0), Tensor<double>::zeros({16}));
  for (int64_t i = 0; i < 5; ++i) {
    double mean = 0, var = 0;
    for (int64_t j = 0; j < 16; ++j) mean += y.at({i, j});
    mean /= 16;
    for (int64_t j = 0; j < 16; ++j) var += (y.at({i, j}) - mean) * (y.at({i, j}) - mean);
    var /= 16;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var == Catch::Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("batch norm") {
  Tensor<double> gamma = Tensor<double>::full({2}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({2});
  Tensor<double> rm = Tensor<double>::zeros({2});
  Tensor<double> rv = Tensor<double>::full({2}, 1.0);

  auto z = batch_norm2d(Tensor<double>::full({1, 2, 3, 3}, 5.0), gamma, beta, rm, rv, 0.1, true);
  for (auto v : z.values()) CHECK(v == Catch::Approx(0.0).margin(1e-9));

  Rng rng(13);
  Tensor<double> x = Tensor<double>::uniform({2, 2, 4, 4}, rng, -2, 2);
  Tensor<double> beta7 = Tensor<double>::full({2}, 7.0);
  auto b = batch_norm2d(x, Tensor<double>::zeros({2}), beta7, rm, rv, 0.1, true);
  for (auto v : b.values()) CHECK(v == Catch::Approx(7.0));

  auto y = batch_norm2d(x, gamma, beta, rm, rv, 0.1, true);
  for (int64_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t p = 0; p < 16; ++p) mean += y.values()[(n * 2 + c) * 16 + p];
    CHECK(std::abs(mean / 32.0) < 1e-6);
  }

  CHECK_THROWS_AS(batch_norm2d(Tensor<double>({1, 2, 1, 1}), gamma, beta, rm, rv, 0.1, true), ShapeError);
  CHECK_NOTHROW(batch_norm2d(Tensor<double>({1, 2, 1, 1}), gamma, beta, rm, rv, 0.1, false));
}

TEST_CASE("relu") {
  Tensor<double> x({3}, {-1, 0, 2});
  auto y = relu(x);
  CHECK(y.values()[0] == 0);
  CHECK(y.values()[1] == 0);
  CHECK(y.values()[2] == 2);
  auto neg = relu(Tensor<double>::full({4}, -3.0));
  for (auto v : neg.values()) CHECK(v == 0);
}

TEST_CASE("shape ops round trips") {
  Rng rng(21);
  Tensor<double> x = Tensor<double>::uniform({4, 6}, rng, -1, 1);

  auto parts = split(x, 0, 2);
  auto back = concat(parts, 0);
  REQUIRE(back.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.values()[i] == x.values()[i]);

  auto zero_added = add(x, Tensor<double>::zeros({4, 6}));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(zero_added.values()[i] == x.values()[i]);

  Tensor<double> t = Tensor<double>::uniform({2, 3, 4}, rng, -1, 1);
  auto p = permute(permute(t, {2, 0, 1}), {1, 2, 0});
  REQUIRE(p.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(p.values()[i] == t.values()[i]);

  auto r = reshape(reshape(t, {6, 4}), {2, 3, 4});
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(r.values()[i] == t.values()[i]);

  CHECK_THROWS_AS(reshape(t, {5, 5}), ShapeError);
  CHECK_THROWS_AS(add(x, Tensor<double>({4, 5})), ShapeError);
  CHECK_THROWS_AS(split(x, 0, 3), ShapeError);
}

TEST_CASE("non-finite outputs are rejected") {
  Tensor<double> big = Tensor<double>::full({2}, 1e308);
  CHECK_THROWS_AS(add(big, big), NumericError);
}

TEST_CASE("property: movement round trips are exact over random shapes") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int rank = 1 + static_cast<int>(rng.below(4));
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(1 + rng.below(5));
    Tensor<double> x = Tensor<double>::uniform(shape, rng, -10, 10);

    // permute by a random permutation, then by its inverse
    std::vector<int> perm(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = rank - 1; i > 0; --i) std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.below(i + 1))]);
    std::vector<int> inverse(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) inverse[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    Tensor<double> back = permute(permute(x, perm), inverse);
    REQUIRE(back.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(back.values()[i] == x.values()[i]);

    // split into a random valid part count along a random axis, re-concat
    const int axis = static_cast<int>(rng.below(rank));
    std::vector<int> divisors;
    for (int d = 1; d <= shape[static_cast<size_t>(axis)]; ++d) {
      if (shape[static_cast<size_t>(axis)] % d == 0) divisors.push_back(d);
    }
    const int parts = divisors[static_cast<size_t>(rng.below(static_cast<int64_t>(divisors.size())))];
    Tensor<double> joined = concat(split(x, axis, parts), axis);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(joined.values()[i] == x.values()[i]);

    // reshape to a random factorization of numel and back
    Tensor<double> reshaped = reshape(reshape(x, {x.numel()}), shape);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(reshaped.values()[i] == x.values()[i]);
  }
}

TEST_CASE("property: softmax rows are stochastic for random sizes") {
  Rng rng(103);
  for (int trial = 0; trial < 30; ++trial) {
    const int64_t r = 1 + rng.below(8), c = 1 + rng.below(12);
    Tensor<double> x = Tensor<double>::uniform({r, c}, rng, -30, 30);
    auto y = softmax_rows(x);
    for (int64_t i = 0; i < r; ++i) {
      double acc = 0;
      for (int64_t j = 0; j < c; ++j) {
        REQUIRE(y.at({i, j}) >= 0.0);
        acc += y.at({i, j});
      }
      REQUIRE(std::abs(acc - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("property: layer norm rows have vanishing mean for random sizes") {
  Rng rng(107);
  for (int trial = 0; trial < 30; ++trial) {
    const int64_t r = 1 + rng.below(6), c = 2 + rng.below(14);
    Tensor<double> x = Tensor<double>::uniform({r, c}, rng, -5, 5);
    auto y = layer_norm(x, Tensor<double>::full({c}, 1.0), Tensor<double>::zeros({c}));
    for (int64_t i = 0; i < r; ++i) {
      double mean = 0;
      for (int64_t j = 0; j < c; ++j) mean += y.at({i, j});
      REQUIRE(std::abs(mean / static_cast<double>(c)) < 1e-6);
    }
  }
}
