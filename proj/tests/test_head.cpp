// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "moetrack/bbox.hpp"
#include "moetrack/config.hpp"
#include "moetrack/model.hpp"

using namespace moetrack;

namespace {

ModelConfig tiny_config() {
  ModelConfig m;
  m.layers = 1;
  m.dim = 8;
  m.heads = 2;
  m.patch = 4;
  m.rank = 2;
  m.experts = 2;
  m.ref_size = 8;
  m.search_size = 16;  // 4x4 = 16 search cells
  m.refs = 2;
  m.validate();
  return m;
}

template <class T>
void randomize_trainable(Model<T>& m, Rng& rng, double s = 0.1) {
  std::normal_distribution<double> d(0.0, s);
  for (auto& p : m.trainable_params())
    for (auto& v : p.tensor->values()) v += static_cast<T>(d(rng));
}

}  // namespace

TEST_CASE("token reweighting has mean one") {
  ModelConfig m = tiny_config();
  Rng rng(1);
  Model<double> model = Model<double>::init(m, rng);
  randomize_trainable(model, rng, 0.5);
  Tensor<double> hp = Tensor<double>::randn({1, m.dim}, rng, 1.0);
  Tensor<double> xp = Tensor<double>::randn({m.search_tokens(), m.dim}, rng, 1.0);
  auto out = model.head_forward(hp, xp);
  double s = 0;
  for (std::size_t i = 0; i < out.weight.size(); ++i) s += out.weight.at(i);
  CHECK(s / static_cast<double>(out.weight.size()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero state token weighs every search token equally") {
  ModelConfig m = tiny_config();
  Rng rng(2);
  Model<double> model = Model<double>::init(m, rng);
  randomize_trainable(model, rng, 0.5);
  Tensor<double> hp = Tensor<double>::zeros({1, m.dim});
  Tensor<double> xp = Tensor<double>::randn({m.search_tokens(), m.dim}, rng, 1.0);
  auto out = model.head_forward(hp, xp);
  for (std::size_t i = 0; i < out.weight.size(); ++i)
    CHECK(out.weight.at(i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("outputs are sigmoid-bounded with the right shapes") {
  ModelConfig m = tiny_config();
  Rng rng(3);
  Model<double> model = Model<double>::init(m, rng);
  randomize_trainable(model, rng, 0.5);
  Tensor<double> hp = Tensor<double>::randn({1, m.dim}, rng, 2.0);
  Tensor<double> xp = Tensor<double>::randn({m.search_tokens(), m.dim}, rng, 2.0);
  auto out = model.head_forward(hp, xp);
  CHECK(out.score.shape() == Shape{m.search_tokens(), 1});
  CHECK(out.box.shape() == Shape{m.search_tokens(), 4});
  for (std::size_t i = 0; i < out.score.size(); ++i) {
    CHECK(out.score.at(i) > 0.0);
    CHECK(out.score.at(i) < 1.0);
  }
  for (std::size_t i = 0; i < out.box.size(); ++i) {
    CHECK(out.box.at(i) > 0.0);
    CHECK(out.box.at(i) < 1.0);
  }
}

TEST_CASE("differentiable GIoU agrees with the scalar reference") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.45);
  for (int trial = 0; trial < 200; ++trial) {
    const double pw = u(rng), ph = u(rng), pcx = 0.25 + u(rng), pcy = 0.25 + u(rng);
    const std::array<double, 4> gt = {0.25 + u(rng), 0.25 + u(rng), u(rng), u(rng)};
    Tensor<double> pred = Tensor<double>::from({1, 4}, {pcx, pcy, pw, ph});
    const double got = giou_t(pred, gt).item();
    const double want = giou(BBox::from_center(pcx, pcy, pw, ph),
                             BBox::from_center(gt[0], gt[1], gt[2], gt[3]));
    CHECK(got == doctest::Approx(want).epsilon(1e-7));
  }
}

TEST_CASE("GIoU hand values: identical, nested, corner-touching") {
  const std::array<double, 4> unit = {0.5, 0.5, 1.0, 1.0};
  CHECK(giou_t(Tensor<double>::from({1, 4}, {0.5, 0.5, 1.0, 1.0}), unit).item() ==
        doctest::Approx(1.0).epsilon(1e-9));
  // a quarter-area box nested inside: IoU 0.25, same enclosure as union
  CHECK(giou_t(Tensor<double>::from({1, 4}, {0.25, 0.25, 0.5, 0.5}), unit).item() ==
        doctest::Approx(0.25).epsilon(1e-6));
  // corner-touching unit boxes: IoU 0, enclosure 4, union 2 -> -0.5
  const std::array<double, 4> other = {1.5, 1.5, 1.0, 1.0};
  CHECK(giou_t(Tensor<double>::from({1, 4}, {0.5, 0.5, 1.0, 1.0}), other).item() ==
        doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("loss closed form on a hand-built prediction") {
  const int nx = 4;
  HeadOut<double> out;
  out.score = Tensor<double>::from({nx, 1}, {0.9, 0.1, 0.2, 0.1});
  std::vector<double> boxes(nx * 4, 0.5);
  boxes[0 * 4 + 2] = 0.2;  // cell 0 predicts (0.5, 0.5, 0.2, 0.5)
  boxes[0 * 4 + 3] = 0.5;
  out.box = Tensor<double>::from({nx, 4}, std::move(boxes));
  out.weight = Tensor<double>::filled({nx}, 1.0);
  const std::array<double, 4> gt = {0.5, 0.5, 0.2, 0.5};

  const double bce = -(std::log(0.9) + std::log(0.9) + std::log(0.8) + std::log(0.9)) / nx;
  const double want = bce + (1.0 - 1.0);  // exact box at the gt cell
  // the tiny-denominator guards shift GIoU by O(1e-8)
  CHECK(tracking_loss(out, 0, gt).item() == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("loss clamps saturated scores instead of producing inf") {
  const int nx = 2;
  HeadOut<double> out;
  out.score = Tensor<double>::from({nx, 1}, {1.0, 0.0});
  out.box = Tensor<double>::filled({nx, 4}, 0.5);
  out.weight = Tensor<double>::filled({nx}, 1.0);
  const double v = tracking_loss(out, 1, {0.5, 0.5, 0.5, 0.5}).item();
  CHECK(std::isfinite(v));
  CHECK(v > 10.0);  // -log(eps)/2 dominates
  CHECK_THROWS_AS(tracking_loss(out, 5, {0.5, 0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("finite-difference gradients through head and loss") {
  ModelConfig m = tiny_config();
  Rng rng(5);
  Model<double> model = Model<double>::init(m, rng);
  randomize_trainable(model, rng, 0.3);
  Tensor<double> hp = Tensor<double>::randn({1, m.dim}, rng, 0.5);
  Tensor<double> xp = Tensor<double>::randn({m.search_tokens(), m.dim}, rng, 0.5);
  const std::array<double, 4> gt = {0.45, 0.55, 0.3, 0.25};

  auto loss_fn = [&] { return tracking_loss(model.head_forward(hp, xp), 5, gt); };
  std::vector<Tensor<double>*> checked = {&model.head.cls_w1, &model.head.cls_b3,
                                          &model.head.reg_w2, &model.head.reg_w3,
                                          &model.head.reg_b1};
  for (auto* p : checked) p->zero_grad();
  backward(loss_fn());
  const double h = 1e-5;
  std::uniform_int_distribution<std::size_t> pick(0, 1u << 30);
  for (auto* p : checked) {
    REQUIRE(p->has_grad());
    for (int rep = 0; rep < 3; ++rep) {
      const std::size_t i = pick(rng) % p->size();
      const double saved = p->values()[i];
      p->values()[i] = saved + h;
      const double up = loss_fn().item();
      p->values()[i] = saved - h;
      const double dn = loss_fn().item();
      p->values()[i] = saved;
      const double fd = (up - dn) / (2 * h);
      const double an = p->grad()[i];
      CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("gradients stay finite on extreme inputs") {
  ModelConfig m = tiny_config();
  Rng rng(6);
  Model<double> model = Model<double>::init(m, rng);
  randomize_trainable(model, rng, 0.5);
  Tensor<double> hp = Tensor<double>::randn({1, m.dim}, rng, 20.0);
  Tensor<double> xp = Tensor<double>::randn({m.search_tokens(), m.dim}, rng, 20.0);
  model.zero_grads();
  backward(tracking_loss(model.head_forward(hp, xp), 0, {0.1, 0.1, 0.05, 0.05}));
  for (auto& p : model.trainable_params())
    if (p.tensor->has_grad())
      for (double g : p.tensor->grad()) CHECK(std::isfinite(g));
}
