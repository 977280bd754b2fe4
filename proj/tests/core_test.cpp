#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <set>

#include "pgalstm/core/checkpoint.hpp"
#include "pgalstm/core/optimizer.hpp"
#include "pgalstm/core/params.hpp"
#include "pgalstm/core/rng.hpp"
#include "pgalstm/core/tape.hpp"
#include "support.hpp"

namespace pgalstm {
namespace {

using testing::gradient_check;
using testing::random_tensor;

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---- tensor ----------------------------------------------------------------

TEST(Tensor, ShapeAndCountMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  const auto m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::scalar(4).item(), 4.0);
  EXPECT_THROW(m.item(), ShapeError);
}

// ---- primitive values --------------------------------------------------------

TEST(Primitives, SigmoidAtZeroIsHalf) {
  Tape t;
  EXPECT_EQ(sigmoid(t.constant(Tensor::scalar(0))).value().item(), 0.5);
}

TEST(Primitives, SigmoidIsStableForLargeInputs) {
  Tape t;
  const auto y = sigmoid(t.constant(Tensor::vector({-800, 800})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 1.0);
}

TEST(Primitives, EluValues) {
  Tape t;
  const auto y = elu(t.constant(Tensor::vector({0.0, -1.0, 2.5})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], -0.63212055882855768, 1e-15);
  EXPECT_EQ(y.value()[2], 2.5);
}

TEST(Primitives, ConcatJoinsColumns) {
  Tape t;
  const auto y = concat({t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({3}))});
  EXPECT_EQ(y.value().values().size(), 3u);
  EXPECT_EQ(y.value()[0], 1.0);
  EXPECT_EQ(y.value()[1], 2.0);
  EXPECT_EQ(y.value()[2], 3.0);
}

TEST(Primitives, MatmulValues) {
  Tape t;
  const auto a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const auto b = t.constant(Tensor::matrix(2, 1, {5, 6}));
  const auto y = matmul(a, b);
  EXPECT_EQ(y.value().at(0, 0), 17.0);
  EXPECT_EQ(y.value().at(1, 0), 39.0);
}

TEST(Primitives, ShapeMismatchesThrow) {
  Tape t;
  const auto a = t.constant(Tensor(Shape{2, 3}, 1.0));
  const auto b = t.constant(Tensor(Shape{2, 2}, 1.0));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(hadamard(a, t.constant(Tensor::vector({1, 2, 3}))), ShapeError);
  EXPECT_THROW(concat({a, t.constant(Tensor(Shape{3, 1}))}), ShapeError);
  EXPECT_THROW(slice_cols(a, 2, 5), ShapeError);
}

TEST(Primitives, RowAndScalarBroadcast) {
  Tape t;
  const auto a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const auto row = add(a, t.constant(Tensor::vector({10, 20})));
  EXPECT_EQ(row.value().at(1, 0), 13.0);
  EXPECT_EQ(row.value().at(1, 1), 24.0);
  const auto sc = sub(a, t.constant(Tensor::scalar(1)));
  EXPECT_EQ(sc.value().at(0, 0), 0.0);
}

TEST(Primitives, NonFiniteResultsAreRejected) {
  Tape t;
  EXPECT_THROW(sqrt(t.constant(Tensor::scalar(-1))), NumericalError);
  EXPECT_THROW(scale(t.constant(Tensor::scalar(1e308)), 1e10), NumericalError);
  EXPECT_THROW(t.leaf(Tensor::scalar(kInf)), NumericalError);
  EXPECT_THROW(t.constant(Tensor::scalar(std::nan(""))), NumericalError);
}

// ---- backward ----------------------------------------------------------------

TEST(Backward, SquareAtThreeHasGradientSix) {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(3));
  const auto g = t.backward(sum(square(x)));
  EXPECT_EQ(g.of(x).item(), 6.0);
}

TEST(Backward, SumSigmoidMatmulMatchesFiniteDifferences) {
  Rng rng(11);
  ParamSet p;
  p.add("W", random_tensor({3, 4}, rng), true);
  p.add("x", random_tensor({2, 3}, rng), false);
  const auto r = gradient_check(p, [](Tape&, const BoundParams& b) {
    return sum(sigmoid(matmul(b["x"], b["W"])));
  });
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  EXPECT_EQ(r.checked, 18u);
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  Tape t;
  const auto x = t.leaf(Tensor::vector({1, 2}));
  const auto c = t.constant(Tensor::vector({3, 4}));
  const auto g = t.backward(sum(c));
  EXPECT_FALSE(g.has(x));
  const auto gx = g.of(x);
  EXPECT_EQ(gx.shape(), x.shape());
  EXPECT_EQ(gx[0], 0.0);
  EXPECT_EQ(gx[1], 0.0);
}

TEST(Backward, RejectsNonScalarEmptyAndForeignLosses) {
  Tape empty;
  EXPECT_THROW(empty.backward(Var{&empty, 0}), Error);
  Tape t;
  const auto x = t.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(x), ShapeError);
  Tape other;
  const auto y = sum(other.leaf(Tensor::vector({1})));
  EXPECT_THROW(t.backward(y), Error);
}

TEST(Backward, FanOutAccumulates) {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(2));
  const auto y = sum(hadamard(x, add(x, x)));  // 2x^2
  EXPECT_EQ(t.backward(y).of(x).item(), 8.0);
}

// Every primitive's adjoint against central differences on random inputs.
class PrimitiveAdjoint : public ::testing::TestWithParam<const char*> {};

Var apply_primitive(const std::string& op, const BoundParams& b) {
  const auto a = b["a"];
  const auto c = b["c"];
  const auto row = b["row"];
  const auto w = b["w"];
  if (op == "add") return sum(square(add(a, c)));
  if (op == "add_row") return sum(square(add(a, row)));
  if (op == "add_scalar") return sum(square(add(a, b["s"])));
  if (op == "sub") return sum(square(sub(a, c)));
  if (op == "sub_row") return sum(square(sub(a, row)));
  if (op == "hadamard") return sum(hadamard(a, c));
  if (op == "matmul") return sum(square(matmul(a, w)));
  if (op == "concat") return sum(square(matmul(concat({a, c}), b["w2"])));
  if (op == "slice_cols") return sum(square(slice_cols(concat({a, c}), 1, 5)));
  if (op == "sigmoid") return sum(square(sigmoid(a)));
  if (op == "tanh") return sum(square(tanh(a)));
  if (op == "relu") return sum(square(relu(a)));
  if (op == "elu") return sum(square(elu(a, 1.3)));
  if (op == "square") return sum(square(square(a)));
  if (op == "sqrt") return sum(square(sqrt(add(square(a), b["s"]))));
  if (op == "scale") return sum(square(scale(a, -2.5)));
  if (op == "sum") return square(sum(a));
  if (op == "mean") return square(mean(a));
  if (op == "map") {
    auto fn = std::make_shared<ElementwiseFn>(
        ElementwiseFn{"cube", [](double v) { return v * v * v; }, [](double v) { return 3 * v * v; }});
    return sum(map(a, fn));
  }
  throw Error("unknown op " + op);
}

TEST_P(PrimitiveAdjoint, MatchesFiniteDifferences) {
  const std::string op = GetParam();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ParamSet p;
    Tensor a = random_tensor({3, 4}, rng, -2, 2);
    // keep relu inputs away from the kink
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i]) < 0.05) a[i] += 0.1;
    }
    p.add("a", a, true);
    p.add("c", random_tensor({3, 4}, rng, -2, 2), true);
    p.add("row", random_tensor({4}, rng, -2, 2), true);
    p.add("s", Tensor::scalar(rng.uniform(0.5, 1.5)), true);
    p.add("w", random_tensor({4, 2}, rng), true);
    p.add("w2", random_tensor({8, 2}, rng), true);
    const auto r = gradient_check(p, [&](Tape&, const BoundParams& b) { return apply_primitive(op, b); });
    EXPECT_LT(r.max_rel_error, 1e-6) << op << " seed " << seed << " at " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveAdjoint,
                         ::testing::Values("add", "add_row", "add_scalar", "sub", "sub_row", "hadamard",
                                           "matmul", "concat", "slice_cols",
                                           "sigmoid", "tanh", "relu", "elu", "square", "sqrt", "scale", "sum",
                                           "mean", "map"));

TEST(Tape, ReplayIsBitIdenticalAndEveryOpHasAnAdjoint) {
  Rng rng(3);
  Tape t;
  const auto x = t.leaf(random_tensor({5, 3}, rng));
  const auto w = t.leaf(random_tensor({3, 3}, rng));
  auto h = tanh(matmul(x, w));
  h = elu(add(h, sigmoid(slice_cols(concat({h, x}), 0, 3))));
  const auto loss = mean(square(sqrt(add(square(h), t.constant(Tensor::scalar(1))))));
  EXPECT_EQ(t.replay_mismatches(), 0u);
  EXPECT_TRUE(t.audit().empty());
  EXPECT_NO_THROW(t.backward(loss));
}

// ---- Adam --------------------------------------------------------------------

ParamSet scalar_param(double v) {
  ParamSet p;
  p.add("x", Tensor::scalar(v), true);
  return p;
}

TEST(Adam, FirstStepOracle) {
  ParamSet p = scalar_param(1.0);
  Adam adam({.learning_rate = 0.1});
  adam.step(p, {Tensor::scalar(0.5)});
  EXPECT_DOUBLE_EQ(p.at("x").item(), 0.90000000199999996);
  EXPECT_EQ(adam.steps(), 1u);
  EXPECT_DOUBLE_EQ(adam.first_moments()[0].item(), 0.05);
  EXPECT_DOUBLE_EQ(adam.second_moments()[0].item(), 0.00025);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamSet p = scalar_param(1.25);
  Adam adam;
  for (int i = 0; i < 5; ++i) adam.step(p, {Tensor::scalar(0.0)});
  EXPECT_EQ(p.at("x").item(), 1.25);
}

TEST(Adam, IdenticalParametersGetIdenticalUpdates) {
  Rng rng(5);
  ParamSet p;
  p.add("a", Tensor::vector({0.3, 0.3}), true);
  Adam adam({.learning_rate = 0.01});
  for (int i = 0; i < 20; ++i) {
    const double g = rng.normal();
    adam.step(p, {Tensor::vector({g, g})});
  }
  EXPECT_EQ(p.at("a")[0], p.at("a")[1]);
}

TEST(Adam, RejectsBadGradientsWithoutMutation) {
  ParamSet p = scalar_param(2.0);
  Adam adam;
  adam.step(p, {Tensor::scalar(1.0)});
  const ParamSet before = p;
  const auto m = adam.first_moments();
  EXPECT_THROW(adam.step(p, {Tensor::scalar(kInf)}), NumericalError);
  EXPECT_THROW(adam.step(p, {Tensor::scalar(std::nan(""))}), NumericalError);
  EXPECT_THROW(adam.step(p, {Tensor::vector({1, 2})}), ShapeError);
  EXPECT_THROW(adam.step(p, {}), ShapeError);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(adam.first_moments()[0], m[0]);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MinimizesAQuadratic) {
  ParamSet p = scalar_param(5.0);
  Adam adam({.learning_rate = 0.1});
  for (int i = 0; i < 500; ++i) {
    Tape t;
    const auto b = bind(t, p);
    const auto loss = sum(square(sub(b["x"], t.constant(Tensor::scalar(-1)))));
    adam.step(p, b.gradients(t.backward(loss)));
  }
  EXPECT_NEAR(p.at("x").item(), -1.0, 1e-3);
}

// ---- RNG ---------------------------------------------------------------------

// Reference SplitMix64 stepping its state by the golden gamma.
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TEST(Rng, MatchesReferenceSplitMix64) {
  Rng zero(0);
  EXPECT_EQ(zero.next_u64(), 0xe220a8397b1dcdafULL);
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    Rng rng(seed);
    std::uint64_t state = seed;
    for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.next_u64(), splitmix64(state));
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(9), b(9), c(10);
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    const auto x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedStreamsAreIndependentOfParentState) {
  Rng a(4);
  const auto d1 = a.derive(1).next_u64();
  a.next_u64();
  EXPECT_EQ(a.derive(1).next_u64(), d1);
  EXPECT_NE(a.derive(2).next_u64(), d1);
  EXPECT_NE(a.derive(1).seed(), a.seed());
}

TEST(Rng, DistributionMoments) {
  Rng rng(123);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, BelowAndShuffle) {
  Rng rng(8);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_GT(c, 800);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
  std::vector<int> sorted(50);
  std::iota(sorted.begin(), sorted.end(), 0);
  EXPECT_NE(v, sorted);
}

// ---- checkpoint ----------------------------------------------------------------

Checkpoint sample_checkpoint() {
  Rng rng(2);
  Checkpoint c;
  c.model_id = "pga";
  c.params.add("W", random_tensor({3, 2}, rng), true);
  c.params.add("b", random_tensor({2}, rng), false);
  c.params.add("z0", Tensor::scalar(-2.0), false);
  c.params.at("b")[0] = -0.0;
  c.params.at("b")[1] = std::numeric_limits<double>::denorm_min();
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 8), std::string("PGACKPT\0", 8));
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.model_id, "pga");
  EXPECT_TRUE(back.params == c.params);
  EXPECT_TRUE(std::signbit(back.params.at("b")[0]));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "pgalstm_core_test.ckpt").string();
  const auto c = sample_checkpoint();
  save_checkpoint(path, c);
  EXPECT_TRUE(load_checkpoint(path).params == c.params);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), DataError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(decode_checkpoint(""), DataError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[8] = 7;
  EXPECT_THROW(decode_checkpoint(bad_version), DataError);
}

}  // namespace
}  // namespace pgalstm
