#include "../doctest_torch.hpp"

#include "../helpers.hpp"
#include "qcdr/blocks.hpp"
#include "qcdr/errors.hpp"

using namespace qcdr;
using testing_support::camb_weights;
using testing_support::ccmb_weights;
using testing_support::flat;
using testing_support::grid;
using testing_support::max_rel;

TEST_CASE("warp") {
  torch::manual_seed(1);
  const auto x = torch::rand({2, 3, 7, 9}, torch::kDouble);
  SUBCASE("zero flow is exact") {
    CHECK(torch::equal(warp(x, torch::zeros({2, 2, 7, 9}, torch::kDouble)), x));
  }
  SUBCASE("integer flow shifts pixels") {
    auto flow = torch::zeros({2, 2, 7, 9}, torch::kDouble);
    flow.select(1, 0).fill_(1.0);  // sample from x + 1
    const auto y = warp(x, flow);
    CHECK(torch::equal(y.slice(3, 0, 8), x.slice(3, 1, 9)));
    CHECK(torch::equal(y.select(3, 8), x.select(3, 8)));  // border clamp
  }
  SUBCASE("half-pixel flow averages neighbours") {
    auto flow = torch::zeros({2, 2, 7, 9}, torch::kDouble);
    flow.select(1, 1).fill_(0.5);
    const auto y = warp(x, flow);
    const auto expect = 0.5 * (x.slice(2, 0, 6) + x.slice(2, 1, 7));
    CHECK(torch::allclose(y.slice(2, 0, 6), expect, 0, 1e-15));
  }
  CHECK_THROWS_AS(warp(x, torch::zeros({2, 2, 7, 8})), DimensionError);
}

TEST_CASE("flow estimator starts at zero flow") {
  FlowEstimator f(32, std::vector<int64_t>{4, 8, 8, 8}, 2.0);
  const auto image = torch::rand({2, 3, 32, 32});
  const auto flow = f->forward(image);
  CHECK(flow.sizes() == torch::IntArrayRef({2, 2, 32, 32}));
  CHECK(flow.abs().max().item<double>() == 0.0);
  CHECK_THROWS_AS(f->forward(torch::rand({1, 3, 16, 16})), DimensionError);
}

TEST_CASE("CCMB matches the scalar oracle") {
  torch::manual_seed(2);
  for (int trial = 0; trial < 5; ++trial) {
    Ccmb m(4, Modulation::dynamic);
    m->to(torch::kDouble);
    testing_support::randomize(*m, 0.8);
    const auto f = torch::randn({1, 4, 5, 6}, torch::kDouble);
    const auto q = torch::randn({1, 4, 5, 6}, torch::kDouble);
    const auto got = flat(m->forward(f, q));
    CHECK(max_rel(got, oracle::ccmb(grid(f), grid(q), ccmb_weights(m), 2).v) < 1e-10);
    const double theta = m->fusion_ratio(f, q).item<double>();
    CHECK(theta > 0.0);
    CHECK(theta < 1.0);
  }
  const auto f = torch::randn({1, 3, 4, 4}, torch::kDouble);
  const auto q = torch::randn({1, 3, 4, 4}, torch::kDouble);
  Ccmb direct(3, Modulation::direct);
  Ccmb fixed(3, Modulation::fixed);
  CHECK(torch::allclose(direct->forward(f, q), f * q));
  CHECK(torch::allclose(fixed->forward(f, q), 0.5 * f * q + 0.5 * f));
  CHECK(direct->parameters().empty());
  CHECK_THROWS_AS(direct->fusion_ratio(f, q), StateError);

  SUBCASE("theta limits") {
    CHECK(torch::allclose(CcmbImpl::blend(f, q, torch::ones({1}, torch::kDouble)), f * q));
    CHECK(torch::allclose(CcmbImpl::blend(f, q, torch::zeros({1}, torch::kDouble)), f));
    CHECK(torch::allclose(CcmbImpl::blend(f, torch::ones_like(q), torch::rand({1}, torch::kDouble)), f));
  }
  CHECK_THROWS_AS(direct->forward(f, torch::randn({1, 3, 4, 5})), DimensionError);
}

TEST_CASE("CAMB matches the scalar oracle") {
  torch::manual_seed(3);
  for (int trial = 0; trial < 3; ++trial) {
    Camb m(4);
    m->to(torch::kDouble);
    testing_support::randomize(*m, 0.6);
    const auto f = torch::randn({1, 4, 3, 5}, torch::kDouble);
    const auto q = torch::randn({1, 4, 3, 5}, torch::kDouble);
    CHECK(max_rel(flat(m->forward(f, q)), oracle::camb(grid(f), grid(q), camb_weights(m)).v) < 1e-10);
    const auto a = m->attention_weights(f, q);
    CHECK(a.sizes() == torch::IntArrayRef({1, 15, 15}));
    CHECK(torch::allclose(a.sum(-1), torch::ones({1, 15}, torch::kDouble)));
  }
  SUBCASE("batched control broadcast") {
    Camb m(2);
    const auto f = torch::randn({3, 2, 4, 4});
    const auto q = torch::randn({2, 4, 4});
    CHECK(m->forward(f, q).sizes() == f.sizes());
  }
}
