#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "difftad/interval.hpp"
#include "difftad/rng.hpp"

using namespace difftad;

namespace {

TemporalProposal tp(double a, double b) { return TemporalProposal{a, b}; }

TemporalProposal random_proposal(Rng& rng) {
  double a = rng.uniform();
  double b = rng.uniform();
  return canonicalize(a, b);
}

// exhaustive greedy suppression, written independently of nms()
std::vector<std::size_t> brute_force_nms(const std::vector<TemporalProposal>& props,
                                         const std::vector<double>& scores, double thr) {
  std::vector<std::size_t> order(props.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool ok = true;
    for (std::size_t k : kept) {
      if (iou(props[i], props[k]) > thr) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(i);
  }
  return kept;
}

}  // namespace

TEST_CASE("iou identity, partial overlap, disjoint") {
  CHECK(iou(tp(0.2, 0.6), tp(0.2, 0.6)) == doctest::Approx(1.0));
  CHECK(iou(tp(0.0, 0.5), tp(0.25, 0.75)) == doctest::Approx(0.25 / 0.75));
  CHECK(iou(tp(0.0, 0.1), tp(0.5, 0.6)) == doctest::Approx(0.0));
}

TEST_CASE("iou of coincident zero-width intervals is zero") {
  CHECK(iou(tp(0.4, 0.4), tp(0.4, 0.4)) == 0.0);
}

TEST_CASE("iou symmetry and range on random canonical pairs") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    TemporalProposal a = random_proposal(rng);
    TemporalProposal b = random_proposal(rng);
    double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (a.width() > 0.0) CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("pairwise_iou matches the scalar oracle") {
  SUBCASE("identical singleton lists") {
    std::vector<TemporalProposal> xs{tp(0.1, 0.4)};
    Eigen::MatrixXd m = pairwise_iou(xs, xs);
    REQUIRE(m.rows() == 1);
    CHECK(m(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("three disjoint intervals give the identity matrix") {
    std::vector<TemporalProposal> xs{tp(0.0, 0.1), tp(0.3, 0.4), tp(0.6, 0.7)};
    Eigen::MatrixXd m = pairwise_iou(xs, xs);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(m(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
      }
    }
  }
  SUBCASE("random 4x4 equals looped scalar iou") {
    Rng rng(5);
    std::vector<TemporalProposal> xs, ys;
    for (int i = 0; i < 4; ++i) xs.push_back(random_proposal(rng));
    for (int i = 0; i < 4; ++i) ys.push_back(random_proposal(rng));
    Eigen::MatrixXd m = pairwise_iou(xs, ys);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(m(i, j) == iou(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)]));
      }
    }
  }
}

TEST_CASE("canonicalize sorts, clamps and rejects non-finite values") {
  CHECK(canonicalize(0.7, 0.3) == tp(0.3, 0.7));
  CHECK(canonicalize(-0.2, 1.4) == tp(0.0, 1.0));
  CHECK(canonicalize(0.4, 0.4) == tp(0.4, 0.4));
  CHECK_THROWS_AS(canonicalize(std::numeric_limits<double>::quiet_NaN(), 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(canonicalize(0.1, std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
}

TEST_CASE("canonicalize is idempotent") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    double a = rng.uniform(-1.0, 2.0);
    double b = rng.uniform(-1.0, 2.0);
    TemporalProposal once = canonicalize(a, b);
    TemporalProposal twice = canonicalize(once.start, once.end);
    CHECK(once == twice);
  }
}

TEST_CASE("nms basic cases") {
  SUBCASE("two identical intervals keep the higher score") {
    std::vector<TemporalProposal> props{tp(0.1, 0.5), tp(0.1, 0.5)};
    std::vector<double> scores{0.9, 0.8};
    CHECK(nms(props, scores, 0.5) == std::vector<std::size_t>{0});
  }
  SUBCASE("disjoint intervals both survive") {
    std::vector<TemporalProposal> props{tp(0.1, 0.2), tp(0.6, 0.8)};
    std::vector<double> scores{0.5, 0.9};
    auto kept = nms(props, scores, 0.5);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == 1);  // descending score order
    CHECK(kept[1] == 0);
  }
  SUBCASE("score ties break toward the lower index") {
    std::vector<TemporalProposal> props{tp(0.1, 0.5), tp(0.1, 0.5)};
    std::vector<double> scores{0.7, 0.7};
    CHECK(nms(props, scores, 0.5) == std::vector<std::size_t>{0});
  }
  SUBCASE("length mismatch is rejected") {
    std::vector<TemporalProposal> props{tp(0.1, 0.5)};
    std::vector<double> scores{0.7, 0.7};
    CHECK_THROWS_AS(nms(props, scores, 0.5), std::invalid_argument);
  }
}

TEST_CASE("nms matches the exhaustive greedy oracle on random sets") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TemporalProposal> props;
    std::vector<double> scores;
    for (int i = 0; i < 6; ++i) {
      props.push_back(random_proposal(rng));
      scores.push_back(rng.uniform());
    }
    for (double thr : {0.0, 0.3, 0.5, 0.9}) {
      CHECK(nms(props, scores, thr) == brute_force_nms(props, scores, thr));
    }
  }
}

TEST_CASE("nms threshold 1.0 keeps all proposals") {
  Rng rng(7);
  std::vector<TemporalProposal> props;
  std::vector<double> scores;
  for (int i = 0; i < 8; ++i) {
    props.push_back(random_proposal(rng));
    scores.push_back(rng.uniform());
  }
  CHECK(nms(props, scores, 1.0).size() == props.size());
}

TEST_CASE("nms threshold 0.0 keeps one proposal per overlap group") {
  // groups built as cliques: every member of a group contains its center, so
  // the overlap graph restricted to a group is complete
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    int groups = rng.uniform_int(1, 3);
    std::vector<TemporalProposal> props;
    std::vector<double> scores;
    for (int g = 0; g < groups; ++g) {
      double center = 0.15 + 0.35 * g;
      int members = rng.uniform_int(1, 3);
      for (int m = 0; m < members && props.size() < 8; ++m) {
        double lo = center - rng.uniform(0.01, 0.05);
        double hi = center + rng.uniform(0.01, 0.05);
        props.push_back(canonicalize(lo, hi));
        scores.push_back(rng.uniform());
      }
    }
    auto kept = nms(props, scores, 0.0);
    CHECK(kept.size() == static_cast<std::size_t>(groups));
    CHECK(kept == brute_force_nms(props, scores, 0.0));
  }
}
