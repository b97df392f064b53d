#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "eqprop/data.hpp"
#include "eqprop/engine.hpp"
#include "eqprop/errors.hpp"
#include "eqprop/gdu.hpp"
#include "support.hpp"

namespace eqprop {
namespace {

using testing::random_params;
using testing::random_tensor;

std::vector<Tensor> series(std::mt19937_64& rng, std::size_t len, const Shape& shape) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(random_tensor(shape, rng));
  return out;
}

std::vector<Tensor> scaled(std::vector<Tensor> s, double a) {
  for (Tensor& t : s) t *= a;
  return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("eqprop_gdu_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<Sample> toy_batch(std::size_t n, std::size_t inputs, std::size_t outputs) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_toy_sample(100 + i, inputs, outputs));
  return out;
}

TEST(Rmse, IdenticalSeriesScoreZero) {
  std::mt19937_64 rng(1);
  const auto f = series(rng, 6, {3, 4});
  EXPECT_EQ(rmse(f, f), 0.0);
}

TEST(Rmse, ConstantAgainstZeroScoresOne) {
  std::vector<Tensor> f(5, Tensor::filled({4}, 0.7));
  std::vector<Tensor> g(5, Tensor(Shape{4}));
  EXPECT_DOUBLE_EQ(rmse(f, g), 1.0);
}

TEST(Rmse, BothZeroElementsCountAsAgreement) {
  std::vector<Tensor> z(3, Tensor(Shape{2}));
  EXPECT_EQ(rmse(z, z), 0.0);
}

TEST(Rmse, SymmetricAndScaleCovariant) {
  std::mt19937_64 rng(2);
  const auto f = series(rng, 7, {5});
  const auto g = series(rng, 7, {5});
  EXPECT_DOUBLE_EQ(rmse(f, g), rmse(g, f));
  EXPECT_NEAR(rmse(scaled(f, -3.5), scaled(g, -3.5)), rmse(f, g), 1e-14);
  EXPECT_NEAR(rmse(scaled(f, 1e-4), scaled(g, 1e-4)), rmse(f, g), 1e-14);
}

TEST(Rmse, HandComputedElement) {
  // f = (1, 0), g = (0, 1): ‖f−g‖ = 1, max norm = sqrt(1/2).
  std::vector<Tensor> f{Tensor::filled({1}, 1.0), Tensor::filled({1}, 0.0)};
  std::vector<Tensor> g{Tensor::filled({1}, 0.0), Tensor::filled({1}, 1.0)};
  EXPECT_NEAR(rmse(f, g), std::sqrt(2.0), 1e-15);
}

TEST(Rmse, RejectsMisalignedSeries) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(rmse(series(rng, 3, {2}), series(rng, 4, {2})), DimensionError);
  EXPECT_THROW(rmse(series(rng, 3, {2}), series(rng, 3, {3})), DimensionError);
}

TEST(SignAgreement, IdenticalAndNegated) {
  std::mt19937_64 rng(4);
  ProcessSeries s;
  s.ep = series(rng, 4, {10});
  s.neg_bptt = s.ep;
  EXPECT_EQ(sign_agreement(s), 1.0);
  s.neg_bptt = scaled(s.ep, -1.0);
  EXPECT_EQ(sign_agreement(s), 0.0);
}

TEST(SignAgreement, ZeroOnlyMatchesZero) {
  ProcessSeries s;
  Tensor a(Shape{3}), b(Shape{3});
  a[0] = 0.0, b[0] = 0.0;
  a[1] = 0.0, b[1] = 2.0;
  a[2] = -1.0, b[2] = -0.1;
  s.ep = {a};
  s.neg_bptt = {b};
  EXPECT_NEAR(sign_agreement(s), 2.0 / 3.0, 1e-15);
}

TEST(GduProtocol, SeriesLayoutMatchesModel) {
  auto model = make_prototypical_layered_model({{3, 5, 4}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(5);
  const ParamSet p = random_params(*model, rng, 0.3);
  Hyperparams hp{40, 6, 0.01};
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(3, 4, 3), hp, 9);
  EXPECT_EQ(rec.model_id, model->id());
  EXPECT_EQ(rec.batch_size, 3u);
  EXPECT_EQ(rec.seed, 9u);
  ASSERT_EQ(rec.neurons.size(), 2u);
  ASSERT_EQ(rec.synapses.size(), p.size());
  for (const auto& s : rec.neurons) {
    EXPECT_EQ(s.first_t, 0u);
    EXPECT_EQ(s.ep.size(), hp.K);
    EXPECT_EQ(s.neg_bptt.size(), hp.K);
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    EXPECT_TRUE(rec.synapses[k].synapse);
    EXPECT_EQ(rec.synapses[k].first_t, 1u);
    EXPECT_EQ(rec.synapses[k].elements(), p[k].size());
  }
}

TEST(GduProtocol, TargetAtSteadyStateGivesZeroSeries) {
  auto model = make_toy_model({3, 6, 4, Activation{ActivationKind::tanh}, 0.2, false});
  std::mt19937_64 rng(6);
  const ParamSet p = random_params(*model, rng, 0.3);
  Sample s = synthetic_toy_sample(1, 4, 3);
  const Hyperparams hp{400, 10, 0.01, 0.2};
  s.y = relax_free(*model, p, model->bind(p, s.x), hp.T).final_state().s[0];
  const ProcessRecord rec = gdu_protocol(*model, p, {s}, hp);
  EXPECT_LT(max_discrepancy(rec), 1e-12);
  for (const auto& group : {rec.neurons, rec.synapses}) {
    for (const auto& ser : group) {
      for (std::size_t i = 0; i < ser.ep.size(); ++i) {
        EXPECT_LT(max_abs(ser.ep[i]), 1e-10) << ser.name;
        EXPECT_LT(max_abs(ser.neg_bptt[i]), 1e-10) << ser.name;
      }
    }
  }
}

TEST(GduProtocol, ToyProcessesCoincideForSmallBeta) {
  auto model = make_toy_model({});
  std::mt19937_64 rng(7);
  const ParamSet p = random_params(*model, rng, 0.1);
  const Hyperparams hp{3000, 40, 1e-4, 0.08};
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(1, 10, 5), hp);
  for (const auto& row : summarize(rec)) {
    EXPECT_LT(row.rmse, 1e-3) << row.layer;
    EXPECT_GT(row.sign_agreement, 0.99) << row.layer;
  }
}

TEST(GduProtocol, ThreadCountDoesNotChangeResult) {
  auto model = make_prototypical_layered_model({{4, 6, 5}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(8);
  const ParamSet p = random_params(*model, rng, 0.4);
  const Hyperparams hp{60, 8, 0.05};
  const auto batch = toy_batch(7, 5, 4);
  const ProcessRecord a = gdu_protocol(*model, p, batch, hp, 0, 1);
  const ProcessRecord b = gdu_protocol(*model, p, batch, hp, 0, 4);
  for (std::size_t l = 0; l < a.neurons.size(); ++l) EXPECT_EQ(a.neurons[l].ep, b.neurons[l].ep);
  for (std::size_t k = 0; k < a.synapses.size(); ++k) EXPECT_EQ(a.synapses[k].neg_bptt, b.synapses[k].neg_bptt);
}

TEST(GduProtocol, EmptyBatchRejected) {
  auto model = make_toy_model({});
  EXPECT_THROW(gdu_protocol(*model, model->zero_params(), {}, Hyperparams{10, 2, 0.1, 0.08}), PreconditionError);
}

TEST(GduProtocol, SaturatedConvNeuronsCollapseToZero) {
  ConvConfig cfg;
  cfg.fc_sizes = {3};
  cfg.conv_channels = {2};
  cfg.input_extent = 10;
  cfg.conv = {3, 0, 2};
  auto model = make_conv_model(cfg);
  std::mt19937_64 rng(9);
  ParamSet p = random_params(*model, rng, 0.5);
  p[1] *= 20.0;  // drive the convolutional layer deep into the flat parts of the hard sigmoid
  Sample s;
  s.x = random_tensor(model->input_shape(), rng, 0.0, 1.0);
  s.y = Tensor(Shape{3});
  s.y[0] = 1.0;
  const ProcessRecord rec = gdu_protocol(*model, p, {s}, Hyperparams{50, 6, 0.05});
  const ProcessSeries& h0 = rec.neurons.back();
  std::size_t collapsed = 0;
  for (std::size_t e = 0; e < h0.elements(); ++e) {
    bool all_zero = true;
    for (const Tensor& t : h0.ep) all_zero = all_zero && t[e] == 0.0;
    collapsed += all_zero;
  }
  EXPECT_GT(collapsed, 0u);
}

TEST(Sawtooth, PrototypicalZerosAtAlternatingParities) {
  auto model = make_prototypical_layered_model({{4, 6, 6, 5}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(10);
  const ParamSet p = random_params(*model, rng, 0.4);
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(2, 5, 4), Hyperparams{200, 10, 1e-3});
  const SawtoothReport rep = sawtooth_check(rec, *model, 1e-2);
  EXPECT_TRUE(rep.applicable);
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.ep_leak, 1e-2);
  // s¹ at t = 0, s⁰ at t = 1 and s¹ at t = 2 carry no BPTT signal.
  EXPECT_EQ(max_abs(rec.neurons[1].neg_bptt[0]), 0.0);
  EXPECT_EQ(max_abs(rec.neurons[0].neg_bptt[1]), 0.0);
  EXPECT_EQ(max_abs(rec.neurons[1].neg_bptt[2]), 0.0);
  EXPECT_GT(max_abs(rec.neurons[1].neg_bptt[1]), 0.0);
}

TEST(Sawtooth, TightToleranceFlagsEpLeak) {
  auto model = make_prototypical_layered_model({{4, 6, 5}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(11);
  const ParamSet p = random_params(*model, rng, 0.4);
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(1, 5, 4), Hyperparams{200, 6, 0.1});
  const SawtoothReport rep = sawtooth_check(rec, *model, 0.0);
  EXPECT_FALSE(rep.passed);
  for (const auto& v : rep.violations) EXPECT_EQ(v.process, "ep");
}

TEST(Sawtooth, EnergyBasedSkipped) {
  auto model = make_energy_layered_model({{4, 6, 5}});
  std::mt19937_64 rng(12);
  const ParamSet p = random_params(*model, rng, 0.4);
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(1, 5, 4), Hyperparams{50, 5, 0.01, 0.5});
  const SawtoothReport rep = sawtooth_check(rec, *model, 0.0);
  EXPECT_FALSE(rep.applicable);
  EXPECT_TRUE(rep.passed);
}

TEST(Sawtooth, OutputOnlyNetworkPasses) {
  auto model = make_prototypical_layered_model({{3, 5}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(13);
  const ParamSet p = random_params(*model, rng, 0.4);
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(1, 5, 3), Hyperparams{20, 4, 0.01});
  EXPECT_TRUE(sawtooth_check(rec, *model, 1e-2).passed);
}

TEST(Export, CurvesAndSummaryRoundTrip) {
  auto model = make_prototypical_layered_model({{3, 5, 4}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(14);
  const ParamSet p = random_params(*model, rng, 0.4);
  const ProcessRecord rec = gdu_protocol(*model, p, toy_batch(2, 4, 3), Hyperparams{30, 5, 0.01}, 3);
  const auto dir = scratch_dir("roundtrip");
  export_record(rec, dir, 2);
  const auto rows = read_curves(dir / "curves.csv");
  const auto expected = curve_rows(rec, 2);
  ASSERT_EQ(rows.size(), expected.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].kind, expected[i].kind);
    EXPECT_EQ(rows[i].layer, expected[i].layer);
    EXPECT_EQ(rows[i].flat_index, expected[i].flat_index);
    EXPECT_EQ(rows[i].t, expected[i].t);
    EXPECT_EQ(rows[i].delta_ep, expected[i].delta_ep);
    EXPECT_EQ(rows[i].neg_grad_bptt, expected[i].neg_grad_bptt);
  }
  const auto summary = read_summary(dir / "summary.csv");
  const auto direct = summarize(rec);
  ASSERT_EQ(summary.size(), direct.size());
  for (std::size_t i = 0; i < summary.size(); ++i) {
    EXPECT_EQ(summary[i].layer, direct[i].layer);
    EXPECT_EQ(summary[i].rmse, direct[i].rmse);
    EXPECT_EQ(summary[i].sign_agreement, direct[i].sign_agreement);
    EXPECT_EQ(summary[i].n_elements, direct[i].n_elements);
  }
}

TEST(Export, EmptyRecordWritesHeaders) {
  const auto dir = scratch_dir("empty");
  export_record(ProcessRecord{}, dir);
  EXPECT_TRUE(read_curves(dir / "curves.csv").empty());
  EXPECT_TRUE(read_summary(dir / "summary.csv").empty());
}

TEST(Export, CurveSelectionFollowsSeed) {
  auto model = make_prototypical_layered_model({{6, 9, 4}, Activation{ActivationKind::tanh}});
  std::mt19937_64 rng(15);
  const ParamSet p = random_params(*model, rng, 0.4);
  ProcessRecord rec = gdu_protocol(*model, p, toy_batch(1, 4, 6), Hyperparams{30, 3, 0.01}, 1);
  const auto a = curve_rows(rec, 3);
  EXPECT_EQ(a.size(), (3u * 2 + 3u * 2) * 3);
  EXPECT_EQ(curve_rows(rec, 0).size(), (6u + 9u + 54u + 36u) * 3);
  rec.seed = 2;
  const auto b = curve_rows(rec, 3);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].flat_index != b[i].flat_index;
  EXPECT_TRUE(differs);
}

TEST(Export, UnwritableDirectoryNamesPath) {
  try {
    export_record(ProcessRecord{}, "/proc/eqprop-no-such-dir");
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/eqprop-no-such-dir"), std::string::npos);
  }
}

}  // namespace
}  // namespace eqprop
