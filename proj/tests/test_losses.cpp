#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "calprune/grad_check.hpp"
#include "calprune/losses.hpp"
#include "loss_fixtures.hpp"

using namespace calprune;
using namespace calprune::testing;

namespace {

using Builder = std::function<NodeId(DiffGraph&, NodeId, NodeId)>;

Array log_of(std::size_t rows, std::size_t cols, std::vector<double> probs) {
  for (auto& p : probs) p = std::log(p);
  return Array::matrix(rows, cols, probs);
}

double eval_loss(const Builder& build, const Array& log_probs, std::vector<double> targets) {
  DiffGraph g;
  g.set_root(build(g, g.input("lp"), g.input("t")));
  return g.forward({{"lp", log_probs}, {"t", Array::vector(targets)}}).item();
}

double eval_spec(const LossSpec& spec, const Array& logits, const Array& targets, std::size_t k) {
  DiffGraph g;
  build_loss_graph(g, spec, k);
  return g.forward(loss_bindings({logits, targets, k})).item();
}

const Builder kNll = [](DiffGraph& g, NodeId lp, NodeId t) { return nll_loss(g, lp, t); };

Builder focal(double gamma) {
  return [gamma](DiffGraph& g, NodeId lp, NodeId t) { return focal_loss(g, lp, t, gamma); };
}

const Builder kFlsd = [](DiffGraph& g, NodeId lp, NodeId t) { return flsd_loss(g, lp, t); };

double focal_oracle(double p, double gamma) { return -std::pow(1.0 - p, gamma) * std::log(p); }

}  // namespace

TEST(Nll, UniformTwoClass) {
  EXPECT_NEAR(eval_loss(kNll, log_of(1, 2, {0.5, 0.5}), {0}), std::numbers::ln2, 1e-15);
}

TEST(Nll, OneHotIsZero) {
  EXPECT_DOUBLE_EQ(eval_loss(kNll, Array::matrix(1, 2, {0.0, std::log(kLogFloor)}), {0}), 0.0);
}

TEST(Nll, BatchMean) {
  const double v = eval_loss(kNll, log_of(2, 2, {0.5, 0.5, 0.25, 0.75}), {0, 0});
  EXPECT_NEAR(v, (std::log(2.0) + std::log(4.0)) / 2, 1e-15);
  EXPECT_NEAR(v, 1.0397, 1e-4);
}

TEST(Nll, OutOfRangeTargetRejected) {
  EXPECT_THROW(eval_loss(kNll, log_of(1, 2, {0.5, 0.5}), {2}), std::invalid_argument);
}

TEST(Focal, GammaZeroIsNll) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_loss_instance(rng.next());
    const double a = eval_spec(make_spec(LossKind::focal, 0.0), inst.logits, inst.targets, inst.classes);
    const double b = eval_spec(make_spec(LossKind::nll), inst.logits, inst.targets, inst.classes);
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(Focal, HalfProbabilityGammaTwo) {
  EXPECT_NEAR(eval_loss(focal(2.0), log_of(1, 2, {0.5, 0.5}), {1}), 0.25 * std::numbers::ln2, 1e-15);
  EXPECT_NEAR(eval_loss(focal(2.0), log_of(1, 2, {0.5, 0.5}), {1}), 0.1733, 1e-4);
}

TEST(Focal, CertainTargetIsZero) {
  for (double gamma : {0.0, 1.0, 3.0, 5.0}) {
    EXPECT_DOUBLE_EQ(eval_loss(focal(gamma), Array::matrix(1, 2, {0.0, -30.0}), {0}), 0.0);
  }
}

TEST(Focal, NonNegative) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto inst = random_loss_instance(rng.next());
    EXPECT_GE(eval_spec(make_spec(LossKind::focal, rng.uniform(0, 5)), inst.logits, inst.targets, inst.classes), 0.0);
  }
}

TEST(Focal, MonotoneNonincreasingInTargetProbability) {
  for (double gamma : {0.0, 0.5, 1.0, 3.0, 5.0}) {
    double prev = INFINITY;
    for (int i = 1; i < 100; ++i) {
      const double p = i / 100.0;
      const double v = eval_loss(focal(gamma), log_of(1, 2, {p, 1 - p}), {0});
      EXPECT_LE(v, prev) << "gamma " << gamma << " p " << p;
      EXPECT_NEAR(v, focal_oracle(p, gamma), 1e-12);
      prev = v;
    }
  }
}

TEST(Focal, NegativeGammaRejected) {
  EXPECT_THROW(eval_loss(focal(-1.0), log_of(1, 2, {0.5, 0.5}), {0}), std::invalid_argument);
  EXPECT_THROW(make_spec(LossKind::focal, -0.5).validate(), std::invalid_argument);
}

TEST(Flsd, GammaSchedule) {
  EXPECT_EQ(flsd_gamma(0.1), 5.0);
  EXPECT_EQ(flsd_gamma(0.3), 3.0);
  EXPECT_EQ(flsd_gamma(0.2), 3.0);
  EXPECT_EQ(flsd_gamma(0.0), 5.0);
  EXPECT_EQ(flsd_gamma(1.0), 3.0);
}

TEST(Flsd, CollapsesToFocalThree) {
  const Array lp = log_of(2, 2, {0.5, 0.5, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(eval_loss(kFlsd, lp, {0, 1}), eval_loss(focal(3.0), lp, {0, 1}));
}

TEST(Flsd, CollapsesToFocalFive) {
  const Array lp = log_of(2, 2, {0.1, 0.9, 0.9, 0.1});
  EXPECT_DOUBLE_EQ(eval_loss(kFlsd, lp, {0, 1}), eval_loss(focal(5.0), lp, {0, 1}));
}

TEST(Flsd, MixedBatch) {
  const double v = eval_loss(kFlsd, log_of(2, 2, {0.1, 0.9, 0.5, 0.5}), {0, 0});
  const double oracle = (std::pow(0.9, 5) * std::log(10.0) + std::pow(0.5, 3) * std::log(2.0)) / 2;
  EXPECT_NEAR(v, oracle, 1e-12);
  EXPECT_NEAR(v, 0.7232, 1e-4);
}

TEST(Huber, Values) {
  EXPECT_EQ(huber_value(0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(huber_value(0.5, 1.0), 0.125);
  EXPECT_NEAR(huber_value(0.1, 0.005), 4.875e-4, 1e-18);
}

TEST(Huber, GraphMatchesScalar) {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1, 1), alpha = rng.uniform(0.001, 0.5);
    DiffGraph g;
    huber_fn(g, g.input("x"), alpha);
    EXPECT_DOUBLE_EQ(g.forward({{"x", Array::scalar(x)}}).item(), huber_value(x, alpha));
  }
}

TEST(Huber, Even) {
  Rng rng(19);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-2, 2), alpha = rng.uniform(1e-3, 1);
    EXPECT_NEAR(huber_value(x, alpha), huber_value(-x, alpha), 1e-15);
  }
}

TEST(Huber, ContinuouslyDifferentiableAtCorner) {
  for (double alpha : {0.005, 0.1, 1.0}) {
    for (double sign : {1.0, -1.0}) {
      const double x = sign * alpha, h = 1e-7 * alpha;
      const double left = (huber_value(x, alpha) - huber_value(x - h, alpha)) / h;
      const double right = (huber_value(x + h, alpha) - huber_value(x, alpha)) / h;
      EXPECT_NEAR(left, right, 1e-6);
      EXPECT_NEAR(left, sign * alpha, 1e-6);
    }
  }
}

TEST(AuxHuber, PerfectConfidentIsZero) {
  DiffGraph g;
  aux_huber_loss(g, g.input("lp"), g.input("t"), 0.005);
  EXPECT_DOUBLE_EQ(g.forward({{"lp", Array::matrix(2, 2, {0, -40, -40, 0})}, {"t", Array::vector({0, 1})}}).item(),
                   0.0);
}

TEST(AuxHuber, LinearBranchArithmetic) {
  // mean confidence 0.9, accuracy 0.5
  const Array lp = log_of(2, 2, {0.9, 0.1, 0.9, 0.1});
  DiffGraph g;
  aux_huber_loss(g, g.input("lp"), g.input("t"), 0.005);
  const double v = g.forward({{"lp", lp}, {"t", Array::vector({0, 1})}}).item();
  EXPECT_NEAR(v, 1.9875e-3, 1e-15);

  DiffGraph d;
  dca_aux_loss(d, d.input("lp"), d.input("t"));
  const double dv = d.forward({{"lp", lp}, {"t", Array::vector({0, 1})}}).item();
  EXPECT_NEAR(dv, 0.4, 1e-15);
  EXPECT_GT(dv, v);
}

TEST(AuxHuber, ZeroGap) {
  // confidences 0.6 on every row, accuracy 3/5
  const Array lp = log_of(5, 2, {0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4});
  for (double alpha : {0.001, 0.5}) {
    DiffGraph g;
    aux_huber_loss(g, g.input("lp"), g.input("t"), alpha);
    EXPECT_NEAR(g.forward({{"lp", lp}, {"t", Array::vector({0, 0, 0, 1, 1})}}).item(), 0.0, 1e-30);
  }
}

TEST(AuxHuber, EmptyBatchRejected) {
  DiffGraph g;
  aux_huber_loss(g, g.input("lp"), g.input("t"), 0.005);
  EXPECT_THROW(g.forward({{"lp", Array::zeros({0, 2})}, {"t", Array::zeros({0})}}), std::invalid_argument);
}

TEST(AuxHuber, AccuracyCarriesNoGradient) {
  // The gradient equals H'(gap) times the gradient of mean confidence alone.
  Rng rng(23);
  for (int i = 0; i < 20; ++i) {
    const auto inst = random_loss_instance(rng.next());
    DiffGraph g;
    const NodeId z = g.parameter("z");
    const NodeId lp = g.log_softmax(z);
    const NodeId t = g.input("t");
    const NodeId gap = confidence_accuracy_gap(g, lp, t);
    g.set_root(aux_huber_loss(g, lp, t, 0.005));
    g.forward(loss_bindings(inst));
    const double x = g.value(gap).item();
    const Array grad = g.backward().at("z");

    DiffGraph c;
    c.mean_batch(c.exp(c.row_max(c.log_softmax(c.parameter("z")))));
    c.forward({{"z", inst.logits}});
    const Array conf_grad = c.backward().at("z");
    const double slope = std::abs(x) <= 0.005 ? x : 0.005 * (x > 0 ? 1 : -1);
    for (std::size_t j = 0; j < grad.size(); ++j) EXPECT_NEAR(grad[j], slope * conf_grad[j], 1e-15);
  }
}

TEST(AuxHuber, DominatedByDcaOutsideAlpha) {
  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_loss_instance(rng.next());
    const double h = eval_spec(make_spec(LossKind::nll, 3, AuxKind::huber, 1.0), inst.logits, inst.targets, inst.classes) -
                     eval_spec(make_spec(LossKind::nll), inst.logits, inst.targets, inst.classes);
    const double d = eval_spec(make_spec(LossKind::nll, 3, AuxKind::dca, 1.0), inst.logits, inst.targets, inst.classes) -
                     eval_spec(make_spec(LossKind::nll), inst.logits, inst.targets, inst.classes);
    if (d > 0.005) {
      EXPECT_LE(h, d + 1e-12);
    }
  }
}

TEST(Dca, ZeroGap) {
  const Array lp = log_of(2, 2, {0.5, 0.5, 0.5, 0.5});
  DiffGraph g;
  dca_aux_loss(g, g.input("lp"), g.input("t"));
  EXPECT_NEAR(g.forward({{"lp", lp}, {"t", Array::vector({0, 1})}}).item(), 0.0, 1e-16);
}

TEST(Mdca, Examples) {
  auto mdca = [](const Array& lp, std::vector<double> t, std::size_t k) {
    DiffGraph g;
    mdca_aux_loss(g, g.input("lp"), g.input("t"), k);
    return g.forward({{"lp", lp}, {"t", Array::vector(t)}}).item();
  };
  EXPECT_NEAR(mdca(log_of(2, 2, {0.7, 0.3, 0.7, 0.3}), {0, 1}, 2), 0.2, 1e-15);
  EXPECT_NEAR(mdca(Array::matrix(2, 2, {0, -60, -60, 0}), {0, 1}, 2), 0.0, 1e-20);
  EXPECT_NEAR(mdca(log_of(3, 3, {1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3}), {0, 1, 2}, 3),
              0.0, 1e-15);
}

TEST(Brier, Examples) {
  auto brier = [](const Array& lp, std::vector<double> t) {
    DiffGraph g;
    brier_loss(g, g.input("lp"), g.input("t"), lp.cols());
    return g.forward({{"lp", lp}, {"t", Array::vector(t)}}).item();
  };
  EXPECT_NEAR(brier(Array::matrix(1, 2, {0, -60}), {0}), 0.0, 1e-20);
  EXPECT_NEAR(brier(log_of(1, 2, {0.5, 0.5}), {0}), 0.5, 1e-15);
}

TEST(LabelSmoothing, ZeroEpsilonIsNll) {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_loss_instance(rng.next());
    const double a = eval_spec(make_spec(LossKind::label_smoothing, 3, std::nullopt, 0, 0.0), inst.logits, inst.targets,
                               inst.classes);
    const double b = eval_spec(make_spec(LossKind::nll), inst.logits, inst.targets, inst.classes);
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(LabelSmoothing, SoftTargetOracle) {
  const Array lp = log_of(1, 3, {0.6, 0.3, 0.1});
  DiffGraph g;
  label_smoothing_loss(g, g.input("lp"), g.input("t"), 3, 0.1);
  const double v = g.forward({{"lp", lp}, {"t", Array::vector({0})}}).item();
  EXPECT_NEAR(v, -(0.9 * std::log(0.6) + 0.05 * std::log(0.3) + 0.05 * std::log(0.1)), 1e-15);
}

TEST(LabelSmoothing, BadEpsilonRejected) {
  EXPECT_THROW(make_spec(LossKind::label_smoothing, 3, std::nullopt, 0, 1.0).validate(), std::invalid_argument);
}

TEST(Total, LambdaZeroIsBitwiseClassificationLoss) {
  Rng rng(37);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_loss_instance(rng.next());
    for (AuxKind aux : {AuxKind::huber, AuxKind::dca, AuxKind::mdca}) {
      const double a = eval_spec(make_spec(LossKind::flsd, 3, aux, 0.0), inst.logits, inst.targets, inst.classes);
      const double b = eval_spec(make_spec(LossKind::flsd), inst.logits, inst.targets, inst.classes);
      EXPECT_EQ(a, b);
    }
  }
}

TEST(Total, IsClassificationPlusLambdaAux) {
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_loss_instance(rng.next());
    for (LossKind kind : {LossKind::nll, LossKind::flsd, LossKind::brier}) {
      DiffGraph g;
      const NodeId lp = g.log_softmax(g.parameter("z"));
      const NodeId t = g.input("t");
      const NodeId cls = classification_loss(g, lp, t, make_spec(kind), inst.classes);
      const NodeId aux = aux_huber_loss(g, lp, t, 0.005);
      g.set_root(total_loss(g, lp, t, make_spec(kind, 3, AuxKind::huber, 10.0), inst.classes));
      const double total = g.forward(loss_bindings(inst)).item();
      EXPECT_NEAR(total, g.value(cls).item() + 10.0 * g.value(aux).item(), 1e-12);
    }
  }
}

TEST(Spec, PaperDefaultsValid) {
  LossSpec s;
  EXPECT_EQ(s.kind, LossKind::flsd);
  s.aux = AuxLossSpec{};
  EXPECT_EQ(s.aux->alpha, 0.005);
  EXPECT_EQ(s.aux->lambda, 10.0);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.gamma, 3.0);
}

TEST(Spec, InvalidAuxRejected) {
  EXPECT_THROW(make_spec(LossKind::nll, 3, AuxKind::huber, -1.0).validate(), std::invalid_argument);
  LossSpec s = make_spec(LossKind::nll, 3, AuxKind::huber);
  s.aux->alpha = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Spec, KindNamesRoundTrip) {
  for (LossKind k : {LossKind::nll, LossKind::focal, LossKind::flsd, LossKind::brier, LossKind::label_smoothing}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  for (AuxKind k : {AuxKind::huber, AuxKind::dca, AuxKind::mdca}) EXPECT_EQ(parse_aux_kind(to_string(k)), k);
  EXPECT_THROW(parse_loss_kind("mse"), std::invalid_argument);
}

class LossGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(LossGradient, PassesGradCheck) {
  const auto c = all_loss_cases().at(GetParam());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_loss_instance(mix_seed(seed, GetParam()));
    DiffGraph g;
    build_loss_graph(g, c.spec, inst.classes);
    const auto report = grad_check(g, loss_bindings(inst), 1e-5, 1e-4);
    EXPECT_TRUE(report.passed()) << c.name << " seed " << seed << " err " << report.max_relative_error();
  }
}

INSTANTIATE_TEST_SUITE_P(AllLosses, LossGradient, ::testing::Range<std::size_t>(0, 10),
                         [](const auto& info) { return all_loss_cases().at(info.param).name; });
