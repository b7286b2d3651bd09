#include <algorithm>
#include <atomic>
#include <numeric>
#include <thread>

#include <gtest/gtest.h>

#include "msfmamba/rng.hpp"
#include "msfmamba/scan_routes.hpp"

using namespace msf;
using TD = Tensor<double>;

namespace {

TD grid(std::size_t H, std::size_t W, std::size_t C = 1) {
  TD x(Shape{H, W, C});
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<double>(k + 1);
  return x;
}

std::vector<double> flat(const TD& t) { return {t.data().begin(), t.data().end()}; }

// Independent index arithmetic: position of the k-th visited cell.
std::vector<std::size_t> oracle(std::size_t H, std::size_t W, RouteId r) {
  std::vector<std::size_t> out;
  switch (r) {
    case RouteId::RowForward:
      for (std::size_t k = 0; k < H * W; ++k) out.push_back(k);
      break;
    case RouteId::ColForward:
      for (std::size_t k = 0; k < H * W; ++k) out.push_back((k % H) * W + k / H);
      break;
    case RouteId::RowReverse:
      for (std::size_t k = 0; k < H * W; ++k) out.push_back(H * W - 1 - k);
      break;
    case RouteId::ColReverse:
      for (std::size_t k = 0; k < H * W; ++k) {
        const std::size_t m = H * W - 1 - k;
        out.push_back((m % H) * W + m / H);
      }
      break;
    case RouteId::DiagForward:
      // Diagonal s = i + j, rows increasing within a diagonal.
      for (std::size_t s = 0; s + 1 < H + W; ++s)
        for (std::size_t i = 0; i < H; ++i)
          if (s >= i && s - i < W) out.push_back(i * W + (s - i));
      break;
    case RouteId::AntiDiagForward:
      // Diagonal s = i + (W - 1 - j) from the top-right corner, rows increasing.
      for (std::size_t s = 0; s + 1 < H + W; ++s)
        for (std::size_t i = 0; i < H; ++i)
          if (s >= i && s - i < W) out.push_back(i * W + (W - 1 - (s - i)));
      break;
  }
  return out;
}

}  // namespace

TEST(Sigma, TwoByTwoExamples) {
  const auto x = grid(2, 2);
  EXPECT_EQ(flat(sigma(x, RouteId::RowForward)), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(flat(sigma(x, RouteId::ColForward)), (std::vector<double>{1, 3, 2, 4}));
  EXPECT_EQ(flat(sigma(x, RouteId::RowReverse)), (std::vector<double>{4, 3, 2, 1}));
  EXPECT_EQ(flat(sigma(x, RouteId::ColReverse)), (std::vector<double>{4, 2, 3, 1}));
}

TEST(Sigma, ThreeByThreeDiagonal) {
  EXPECT_EQ(flat(sigma(grid(3, 3), RouteId::DiagForward)), (std::vector<double>{1, 2, 4, 3, 5, 7, 6, 8, 9}));
  EXPECT_EQ(flat(sigma(grid(3, 3), RouteId::AntiDiagForward)), (std::vector<double>{3, 2, 6, 1, 5, 9, 4, 8, 7}));
}

TEST(Sigma, ChannelAxisUntouched) {
  const auto x = grid(2, 3, 4);
  const auto s = sigma(x, RouteId::ColForward);
  EXPECT_EQ(s.shape(), (Shape{6, 4}));
  const auto& perm = route_permutation(2, 3, RouteId::ColForward);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t ch = 0; ch < 4; ++ch) EXPECT_EQ(s.at(k, ch), x[perm[k] * 4 + ch]);
}

TEST(Routes, MatchIndexOracleUpToEightByEight) {
  for (std::size_t H = 1; H <= 8; ++H)
    for (std::size_t W = 1; W <= 8; ++W)
      for (auto r : kCanonicalRoutes) {
        EXPECT_EQ(route_permutation(H, W, r), oracle(H, W, r)) << route_name(r) << " " << H << "x" << W;
        const auto& inv = route_inverse(H, W, r);
        const auto& perm = route_permutation(H, W, r);
        for (std::size_t k = 0; k < H * W; ++k) EXPECT_EQ(inv[perm[k]], k);
      }
}

TEST(Routes, BetaSigmaIsBitwiseIdentity) {
  Rng rng(1);
  for (std::size_t H = 1; H <= 8; ++H)
    for (std::size_t W = 1; W <= 8; ++W) {
      const auto x = rng.normal_tensor<double>(Shape{H, W, 3});
      for (auto r : kCanonicalRoutes) {
        const auto s = sigma(x, r);
        auto sorted_in = flat(x), sorted_out = flat(s);
        std::sort(sorted_in.begin(), sorted_in.end());
        std::sort(sorted_out.begin(), sorted_out.end());
        EXPECT_EQ(sorted_in, sorted_out);
        EXPECT_TRUE(bitwise_equal(beta(s, r, H, W), x)) << route_name(r);
      }
    }
}

TEST(Routes, RandomFiveBySeven) {
  Rng rng(2);
  const auto x = rng.normal_tensor<double>(Shape{5, 7, 3});
  EXPECT_TRUE(bitwise_equal(beta(sigma(x, RouteId::RowForward), RouteId::RowForward, 5, 7), x));
}

TEST(Routes, ConstantSequenceGivesConstantMap) {
  for (auto r : kCanonicalRoutes) {
    for (double v : beta(TD(Shape{12, 2}, 2.5), r, 3, 4).data()) EXPECT_EQ(v, 2.5);
  }
}

TEST(Routes, MismatchedBetaComposesPermutations) {
  // beta_ColForward(sigma_ColReverse(X))[perm_cf[k]] = X[perm_cr[k]].
  const std::size_t H = 3, W = 5;
  const auto x = grid(H, W);
  const auto y = beta(sigma(x, RouteId::ColReverse), RouteId::ColForward, H, W);
  const auto& cf = route_permutation(H, W, RouteId::ColForward);
  const auto& cr = route_permutation(H, W, RouteId::ColReverse);
  for (std::size_t k = 0; k < H * W; ++k) EXPECT_EQ(y[cf[k]], x[cr[k]]);
  // For column scans this composition is the 180 degree rotation.
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) EXPECT_EQ(y.at(i, j, 0), x.at(H - 1 - i, W - 1 - j, 0));
}

TEST(Routes, ReverseRoutesReverseTheSequence) {
  Rng rng(3);
  const auto x = rng.normal_tensor<double>(Shape{4, 6, 2});
  const std::pair<RouteId, RouteId> pairs[] = {{RouteId::RowForward, RouteId::RowReverse},
                                               {RouteId::ColForward, RouteId::ColReverse}};
  for (auto [fwd, rev] : pairs) {
    const auto f = sigma(x, fwd), r = sigma(x, rev);
    for (std::size_t k = 0; k < 24; ++k)
      for (std::size_t ch = 0; ch < 2; ++ch) EXPECT_EQ(r.at(k, ch), f.at(23 - k, ch));
  }
}

TEST(Routes, BetaLengthMismatch) {
  EXPECT_THROW(beta(TD(Shape{5, 2}), RouteId::RowForward, 2, 3), DimensionError);
  EXPECT_THROW(beta(Var<double>::constant(TD(Shape{5, 2})), RouteId::RowForward, 2, 3), DimensionError);
}

TEST(Routes, ConcurrentCacheReaders) {
  std::vector<std::jthread> pool;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t H = 1; H <= 12; ++H)
        for (auto r : kCanonicalRoutes) {
          const std::size_t W = 1 + (H + static_cast<std::size_t>(t)) % 9;
          if (route_permutation(H, W, r) != oracle(H, W, r)) ++mismatches;
        }
    });
  }
  pool.clear();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Spectral, ForwardAndReverseOrder) {
  TD x(Shape{2, 2, 3});
  for (std::size_t p = 0; p < 4; ++p) {
    x[p * 3 + 0] = 10;
    x[p * 3 + 1] = 20;
    x[p * 3 + 2] = 30;
  }
  const auto f = spectral_flatten(Var<double>::constant(x), SpectralDirection::Forward).value();
  const auto r = spectral_flatten(Var<double>::constant(x), SpectralDirection::Reverse).value();
  EXPECT_EQ(f.shape(), (Shape{3, 4}));
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(f.at(0, p), 10);
    EXPECT_EQ(f.at(2, p), 30);
    EXPECT_EQ(r.at(0, p), 30);
    EXPECT_EQ(r.at(2, p), 10);
  }
}

TEST(Spectral, RoundTrip) {
  Rng rng(4);
  const auto x = Var<double>::constant(rng.normal_tensor<double>(Shape{3, 5, 4}));
  for (auto dir : {SpectralDirection::Forward, SpectralDirection::Reverse}) {
    EXPECT_TRUE(bitwise_equal(spectral_unflatten(spectral_flatten(x, dir), dir, 3, 5).value(), x.value()));
  }
}

TEST(Spectral, SinglePixelIsItsSpectrum) {
  const TD x(Shape{1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  const auto f = spectral_flatten(Var<double>::constant(x), SpectralDirection::Forward).value();
  EXPECT_EQ(f.shape(), (Shape{4, 1}));
  EXPECT_EQ(flat(f), (std::vector<double>{1, 2, 3, 4}));
}
