#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"
#include "vareid/gradcheck.hpp"
#include "vareid/losses.hpp"

using namespace vareid;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using testing::kind_of;
using testing::rows_of;

namespace {

LossConfig plain(double s = 30.0, double m = 0.0, MarginMode mode = MarginMode::arc_plus) {
  LossConfig cfg;
  cfg.scale = s;
  cfg.margin = m;
  cfg.margin_mode = mode;
  return cfg;
}

ClassifierParams random_params(std::size_t k, std::size_t v, std::size_t d, std::mt19937_64& rng) {
  return {testing::random_unit_rows(k, d, rng), testing::random_unit_rows(k * v, d, rng), v};
}

}  // namespace

TEST_CASE("identity probabilities", "[losses]") {
  SECTION("equal angles without margin give a uniform distribution") {
    const Vec x{1.0, 0.0, 0.0};
    const Matrix w = rows_of({{0.5, 0.5, std::sqrt(0.5)}, {0.5, -0.5, std::sqrt(0.5)}, {0.5, 0.5, -std::sqrt(0.5)},
                              {0.5, -0.5, -std::sqrt(0.5)}});
    const auto q = identity_probs(x, w, plain(), 2);
    for (double p : q.probs) CHECK_THAT(p, WithinAbs(0.25, 1e-12));
  }
  SECTION("two classes, cosines 1 and 0") {
    const auto q = identity_probs(Vec{1.0, 0.0}, rows_of({{1.0, 0.0}, {0.0, 1.0}}), plain(), 0);
    // sigma(30) and 1 - sigma(30) = e^-30 / (1 + e^-30) from an independent calculator.
    CHECK_THAT(q[0], WithinAbs(0.9999999999999065, 1e-15));
    CHECK_THAT(q[1], WithinRel(9.3576229688393e-14, 1e-9));
  }
  SECTION("additive angular margin on the target") {
    const double t = 0.3;
    const Matrix w = rows_of({{std::cos(t), std::sin(t)}, {std::cos(t), -std::sin(t)}});
    const auto q = identity_probs(Vec{1.0, 0.0}, w, plain(30.0, 0.5), 0);
    // logits 30 cos(0.8) = 20.9012..., 30 cos(0.3) = 28.6600...; softmax by calculator.
    CHECK_THAT(q[0], WithinRel(0.0004267465711983286, 1e-9));
    CHECK_THAT(q[0] + q[1], WithinAbs(1.0, 1e-12));
  }
  SECTION("features must be unit length") {
    CHECK(kind_of([] { identity_probs(Vec{2.0, 0.0}, rows_of({{1.0, 0.0}, {0.0, 1.0}}), plain(), 0); }) ==
          ErrorKind::NotUnitNorm);
  }
}

TEST_CASE("viewpoint probabilities", "[losses]") {
  const Matrix u = rows_of({{1.0, 0.0}, {-1.0, 0.0}});
  const auto r = viewpoint_probs(Vec{1.0, 0.0}, u, plain(1.0), 0, 0, 2);
  CHECK_THAT(r[0], WithinAbs(0.8807970779778824, 1e-12));
  CHECK_THAT(r[1], WithinAbs(0.11920292202211756, 1e-12));

  std::mt19937_64 rng(4);
  Matrix same(6, 3);
  const Vec c = testing::random_unit_vec(3, rng);
  for (std::size_t i = 0; i < 6; ++i) std::copy(c.begin(), c.end(), same.row(i).begin());
  const auto uniform = viewpoint_probs(testing::random_unit_vec(3, rng), same, plain(), 1, 2, 3);
  for (double p : uniform.probs) CHECK_THAT(p, WithinAbs(1.0 / 6.0, 1e-12));

  CHECK(kind_of([&] { viewpoint_probs(Vec{1.0, 0.0}, u, plain(), 0, 2, 2); }) == ErrorKind::IndexOutOfRange);
}

TEST_CASE("cross entropy", "[losses]") {
  CHECK(cross_entropy({{0, 1, 0}}, {{0, 1, 0}}) == 0.0);
  CHECK_THAT(cross_entropy({{1, 0}}, {{0.5, 0.5}}), WithinAbs(std::log(2.0), 1e-15));
  CHECK_THAT(cross_entropy({{0.9, 0.1}}, {{0.8, 0.2}}), WithinAbs(0.3617729874261988, 1e-12));
  CHECK(kind_of([] { cross_entropy({{1, 0}}, {{0.5, 0.25, 0.25}}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("center regularization", "[losses]") {
  SECTION("parallel centers") {
    std::mt19937_64 rng(8);
    ClassifierParams p{testing::random_unit_rows(3, 4, rng), Matrix(9, 4), 3};
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t v = 0; v < 3; ++v) {
        std::copy(p.identity_centers.row(k).begin(), p.identity_centers.row(k).end(),
                  p.viewpoint_centers.row(k * 3 + v).begin());
      }
    }
    CHECK_THAT(center_regularization(p).value, WithinAbs(0.0, 1e-15));
    CHECK_THAT(mean_center_cosine(p), WithinAbs(1.0, 1e-15));
  }
  SECTION("orthogonal centers") {
    const ClassifierParams p{rows_of({{1, 0, 0}}), rows_of({{0, 1, 0}, {0, 0, 1}}), 2};
    CHECK_THAT(center_regularization(p).value, WithinAbs(1.0, 1e-15));
  }
  SECTION("average over pairs") {
    const ClassifierParams p{rows_of({{1, 0}}), rows_of({{1, 0}, {0, 1}}), 2};
    CHECK_THAT(center_regularization(p).value, WithinAbs(0.5, 1e-15));
  }
  SECTION("shape checks") {
    const ClassifierParams p{rows_of({{1, 0}}), rows_of({{1, 0}, {0, 1}}), 3};
    CHECK(kind_of([&] { center_regularization(p); }) == ErrorKind::ShapeMismatch);
  }
  SECTION("non-negative on random geometry") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 300; ++trial) {
      const auto p = random_params(1 + trial % 5, 1 + trial % 4, 2 + trial % 7, rng);
      CHECK(center_regularization(p).value >= 0.0);
    }
  }
}

TEST_CASE("composite loss reductions", "[losses]") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto params = random_params(4, 3, 8, rng);
    const Vec x = testing::random_unit_vec(8, rng);
    const std::size_t y = trial % 4;
    const std::size_t v = trial % 3;

    LossConfig cfg = plain(30.0, 0.5);
    cfg.beta = 0.0;
    const LossOutput xent = va_loss(x, y, v, params, cfg, LabelMode::xent);
    CHECK_THAT(xent.value,
               WithinRel(cross_entropy(hard_identity(y, 4), identity_probs(x, params.identity_centers, cfg, y)), 1e-12));
    CHECK(xent.loss_v == 0.0);
    CHECK(xent.loss_r == 0.0);

    LossConfig bare = plain(30.0, 0.0);
    bare.alpha = 0.0;
    bare.beta = 0.0;
    const LossOutput lv = va_loss(x, y, v, params, bare, LabelMode::ly_lv);
    const double expected =
        cross_entropy(hard_identity(y, 4), identity_probs(x, params.identity_centers, bare, y)) +
        cross_entropy(hard_view(y, v, 4, 3), viewpoint_probs(x, params.viewpoint_centers, bare, y, v, 3));
    CHECK_THAT(lv.value, WithinRel(expected, 1e-12));

    LossConfig full = plain(30.0, 0.5);
    const LossOutput all = va_loss(x, y, v, params, full, LabelMode::va_reid);
    CHECK_THAT(all.value, WithinRel(all.loss_y + all.loss_v + full.beta * all.loss_r, 1e-14));
    CHECK_THAT(all.loss_r, WithinAbs(center_regularization(params).value, 1e-15));
  }
}

TEST_CASE("loss properties", "[losses][property]") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> scale(1e-2, 1e2);
  const LabelMode modes[] = {LabelMode::xent, LabelMode::lsr, LabelMode::alsr,
                             LabelMode::ly_lv, LabelMode::ly_lr, LabelMode::va_reid};
  const MarginMode margins[] = {MarginMode::arc_plus, MarginMode::arc_minus, MarginMode::cos_sub};

  SECTION("probabilities are distributions, even at extreme scale") {
    for (int trial = 0; trial < 500; ++trial) {
      const auto params = random_params(5, 3, 6, rng);
      const Vec x = testing::random_unit_vec(6, rng);
      const double s = trial % 2 == 0 ? 1e4 : 30.0;
      const auto cfg = plain(s, 0.5, margins[trial % 3]);
      CHECK(is_valid_distribution(identity_probs(x, params.identity_centers, cfg, trial % 5)));
      CHECK(is_valid_distribution(viewpoint_probs(x, params.viewpoint_centers, cfg, trial % 5, trial % 3, 3)));
      CHECK(std::isfinite(va_loss(x, trial % 5, trial % 3, params, cfg, LabelMode::va_reid).value));
    }
  }

  SECTION("scale invariance of the feature") {
    for (int trial = 0; trial < 200; ++trial) {
      const auto params = random_params(4, 3, 8, rng);
      const Vec x = testing::random_unit_vec(8, rng);
      const LabelMode mode = modes[trial % 6];
      const auto cfg = plain(30.0, 0.3, margins[trial % 3]);
      const VaTargets targets = build_targets(x, 1, 2, params, cfg, mode);
      Vec scaled = x;
      const double c = scale(rng);
      for (double& e : scaled) e *= c;
      const auto a = va_loss_with_targets(x, 1, 2, params, cfg, mode, targets);
      const auto b = va_loss_with_targets(scaled, 1, 2, params, cfg, mode, targets);
      CHECK_THAT(b.value, WithinAbs(a.value, 1e-10 * std::max(1.0, a.value)));
      const auto pa = angular_loss(x, params.identity_centers, cfg, 1, targets.identity).probs;
      const auto pb = angular_loss(scaled, params.identity_centers, cfg, 1, targets.identity).probs;
      for (std::size_t j = 0; j < 4; ++j) CHECK_THAT(pb[j], WithinAbs(pa[j], 1e-12));
    }
  }

  SECTION("permuting non-target identity centers permutes the probabilities") {
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = 5;
      const Matrix w = testing::random_unit_rows(k, 6, rng);
      const Vec x = testing::random_unit_vec(6, rng);
      const std::size_t y = trial % k;
      std::vector<std::size_t> perm{0, 1, 2, 3, 4};
      std::vector<std::size_t> others;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != y) others.push_back(j);
      }
      auto shuffled = others;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t i = 0; i < others.size(); ++i) perm[others[i]] = shuffled[i];
      Matrix wp(k, 6);
      for (std::size_t j = 0; j < k; ++j) std::copy(w.row(j).begin(), w.row(j).end(), wp.row(perm[j]).begin());
      const auto cfg = plain(30.0, 0.5, margins[trial % 3]);
      const auto q = identity_probs(x, w, cfg, y);
      const auto qp = identity_probs(x, wp, cfg, y);
      for (std::size_t j = 0; j < k; ++j) CHECK_THAT(qp[perm[j]], WithinAbs(q[j], 1e-14));
    }
  }

  SECTION("target probability strictly decreases with the angular margin") {
    for (int trial = 0; trial < 200; ++trial) {
      const Matrix w = testing::random_unit_rows(4, 5, rng);
      const Vec x = testing::random_unit_vec(5, rng);
      const double theta = angle(x, w.row(0));
      double prev = 2.0;
      double prev_rest = -1.0;
      for (double m = 0.0; m < 1.5 && theta + m < std::numbers::pi - 1e-3; m += 0.05) {
        const auto q = identity_probs(x, w, plain(30.0, m), 0);
        // Near saturation one side rounds to a constant; the other still moves.
        const double rest = q[1] + q[2] + q[3];
        CHECK(q[0] <= prev);
        CHECK((q[0] < prev || rest > prev_rest));
        prev = q[0];
        prev_rest = rest;
      }
    }
  }
}

TEST_CASE("loss configuration checks", "[losses]") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.margin = 2.0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidConfig);
  cfg = {};
  cfg.scale = 0.0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidConfig);
  cfg = {};
  cfg.alpha = 1.5;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidConfig);

  CHECK(parse_label_mode("alsr_plus_valsr") == LabelMode::ly_lv);
  CHECK(parse_label_mode("va_reid") == LabelMode::va_reid);
  CHECK_FALSE(parse_label_mode("triplet").has_value());
  CHECK(parse_margin_mode("cos_sub") == MarginMode::cos_sub);
  CHECK_FALSE(parse_margin_mode("sideways").has_value());
  for (auto mode : {MarginMode::arc_plus, MarginMode::arc_minus, MarginMode::cos_sub}) {
    CHECK(parse_margin_mode(to_string(mode)) == mode);
  }
}

TEST_CASE("analytic gradients match finite differences", "[losses][gradcheck]") {
  GradcheckOptions opt;
  opt.seed = 2024;
  opt.repeats = 1;
  const auto report = run_gradcheck(opt);
  CHECK(report.instances == 18);
  for (const auto& c : report.components) {
    INFO(c.name << " max relative error " << c.max_rel_error);
    CHECK(c.max_rel_error < 1e-5);
  }
  CHECK(report.pass());

  // Repeated runs give the same report.
  CHECK(run_gradcheck(opt).to_text(opt.tolerance) == report.to_text(opt.tolerance));

  opt.analytic_perturbation = 1e-2;
  const auto broken = run_gradcheck(opt);
  CHECK_FALSE(broken.pass());
}
