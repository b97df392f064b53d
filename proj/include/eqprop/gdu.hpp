#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eqprop/models.hpp"

namespace eqprop {

/// One layer or parameter group: Δ^EP(t) next to −∇^BPTT(t), averaged over
/// the batch. Neuron series start at t = 0, synapse series at t = 1.
struct ProcessSeries {
  std::string name;
  bool synapse = false;
  std::size_t first_t = 0;
  std::vector<Tensor> ep;
  std::vector<Tensor> neg_bptt;

  std::size_t elements() const { return ep.empty() ? 0 : ep.front().size(); }
};

struct ProcessRecord {
  std::string model_id;
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  double max_residual = 0.0;  // largest ‖s_T − s_{T−1}‖∞ over the batch
  std::vector<ProcessSeries> neurons;
  std::vector<ProcessSeries> synapses;
};

/// First phase for T steps, then EP and truncated BPTT over K steps on each
/// sample; series are averaged elementwise over the batch.
ProcessRecord gdu_protocol(const Model& model, const ParamSet& params, const std::vector<Sample>& batch,
                           const Hyperparams& hp, std::uint64_t seed = 0, std::size_t threads = 1);

/// Mean over elements of ‖f_e − g_e‖ / max(‖f_e‖, ‖g_e‖), with
/// ‖f‖ = sqrt(mean_t f(t)²); an element whose two norms vanish scores 0.
double rmse(const std::vector<Tensor>& f, const std::vector<Tensor>& g);

/// Fraction of elements whose time-summed processes have the same sign
/// (−1, 0 or +1).
double sign_agreement(const ProcessSeries& series);

/// max over t of ‖Δ^EP(t) + ∇^BPTT(t)‖∞ across every series.
double max_discrepancy(const ProcessRecord& record);

struct LayerSummary {
  std::string layer;
  double rmse = 0.0;
  double sign_agreement = 0.0;
  std::size_t n_elements = 0;
};

std::vector<LayerSummary> summarize(const ProcessRecord& record);

struct SawtoothViolation {
  std::string layer;
  std::size_t t = 0;
  std::string process;  // "bptt" or "ep"
  double value = 0.0;
};

struct SawtoothReport {
  bool applicable = false;
  bool passed = true;
  /// Largest |Δ^EP| at a predicted zero relative to the layer's peak |Δ^EP|.
  double ep_leak = 0.0;
  std::vector<SawtoothViolation> violations;
};

/// In a bipartite model without leak, ∇_{sⁿ}(t) vanishes exactly when
/// depth(n) + t is odd. The EP updates vanish there only as β → 0, so they
/// are tested against `ep_tolerance` times the layer's peak.
SawtoothReport sawtooth_check(const ProcessRecord& record, const Model& model, double ep_tolerance);

struct CurveRow {
  std::string kind;  // "neuron" or "synapse"
  std::string layer;
  std::size_t flat_index = 0;
  std::size_t t = 0;
  double delta_ep = 0.0;
  double neg_grad_bptt = 0.0;
};

/// Rows for `per_layer` elements drawn per series with the record's seed
/// (all elements when the series is smaller, or when per_layer is 0).
std::vector<CurveRow> curve_rows(const ProcessRecord& record, std::size_t per_layer);

/// Writes curves.csv and summary.csv into `dir`.
void export_record(const ProcessRecord& record, const std::filesystem::path& dir, std::size_t per_layer = 5);

void write_curves(const std::vector<CurveRow>& rows, const std::filesystem::path& path);
void write_summary(const std::vector<LayerSummary>& rows, const std::filesystem::path& path);
std::vector<CurveRow> read_curves(const std::filesystem::path& path);
std::vector<LayerSummary> read_summary(const std::filesystem::path& path);

}  // namespace eqprop
