#include "eqprop/gdu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "eqprop/engine.hpp"
#include "eqprop/errors.hpp"
#include "eqprop/parallel.hpp"
#include "eqprop/rng.hpp"

namespace eqprop {

namespace {

struct SampleProcesses {
  EpResult ep;
  BpttResult bptt;
  double residual = 0.0;
};

SampleProcesses run_sample(const Model& model, const ParamSet& params, const Sample& sample, const Hyperparams& hp) {
  const InputDrive drive = model.bind(params, sample.x);
  const Trajectory traj = relax_free(model, params, drive, hp.T, Storage::lean, hp.K);
  SampleProcesses out;
  out.residual = traj.residual;
  out.ep = run_ep_phase(model, params, drive, sample.y, traj.final_state(), hp.beta, hp.K);
  out.bptt = run_bptt(model, params, drive, traj, sample.y, hp.K);
  return out;
}

void accumulate(ProcessRecord& rec, const SampleProcesses& sp, std::size_t K) {
  for (std::size_t t = 0; t < K; ++t) {
    for (std::size_t l = 0; l < rec.neurons.size(); ++l) {
      rec.neurons[l].ep[t] += sp.ep.delta_s[t].layer(l);
      rec.neurons[l].neg_bptt[t] -= sp.bptt.grad_s[t].layer(l);
    }
    for (std::size_t k = 0; k < rec.synapses.size(); ++k) {
      rec.synapses[k].ep[t] += sp.ep.delta_theta[t][k];
      rec.synapses[k].neg_bptt[t] -= sp.bptt.grad_theta[t][k];
    }
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t series_len(const std::vector<Tensor>& f, const std::vector<Tensor>& g) {
  if (f.size() != g.size()) {
    throw DimensionError("series lengths differ: " + std::to_string(f.size()) + " vs " + std::to_string(g.size()));
  }
  for (std::size_t t = 0; t < f.size(); ++t) require_same_shape(f[t], g[t], "series");
  return f.size();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

ProcessRecord gdu_protocol(const Model& model, const ParamSet& params, const std::vector<Sample>& batch,
                           const Hyperparams& hp, std::uint64_t seed, std::size_t threads) {
  if (batch.empty()) throw PreconditionError("gdu protocol needs a nonempty batch");
  hp.validate(model.setting());

  ProcessRecord rec;
  rec.model_id = model.id();
  rec.hp = hp;
  rec.seed = seed;
  rec.batch_size = batch.size();

  const NeuralState proto = model.initial_state();
  const auto names = model.layer_names();
  for (std::size_t l = 0; l < proto.layer_count(); ++l) {
    ProcessSeries s{names[l], false, 0, {}, {}};
    s.ep.assign(hp.K, Tensor::zeros_like(proto.layer(l)));
    s.neg_bptt = s.ep;
    rec.neurons.push_back(std::move(s));
  }
  const ParamSet zero = model.zero_params();
  for (std::size_t k = 0; k < zero.size(); ++k) {
    ProcessSeries s{zero.names[k], true, 1, {}, {}};
    s.ep.assign(hp.K, zero[k]);
    s.neg_bptt = s.ep;
    rec.synapses.push_back(std::move(s));
  }

  const std::size_t chunk = std::max<std::size_t>(1, threads);
  for (std::size_t begin = 0; begin < batch.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, batch.size() - begin);
    std::vector<SampleProcesses> results(n);
    parallel_for(n, threads, [&](std::size_t i) { results[i] = run_sample(model, params, batch[begin + i], hp); });
    for (const SampleProcesses& sp : results) {
      accumulate(rec, sp, hp.K);
      rec.max_residual = std::max(rec.max_residual, sp.residual);
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto* group : {&rec.neurons, &rec.synapses})
    for (ProcessSeries& s : *group)
      for (std::size_t t = 0; t < hp.K; ++t) {
        s.ep[t] *= inv;
        s.neg_bptt[t] *= inv;
      }
  return rec;
}

double rmse(const std::vector<Tensor>& f, const std::vector<Tensor>& g) {
  const std::size_t K = series_len(f, g);
  if (K == 0) return 0.0;
  const std::size_t n = f.front().size();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    double ff = 0, gg = 0, dd = 0;
    for (std::size_t t = 0; t < K; ++t) {
      const double a = f[t][e], b = g[t][e];
      ff += a * a;
      gg += b * b;
      dd += (a - b) * (a - b);
    }
    const double denom = std::sqrt(std::max(ff, gg) / K);
    if (denom > 0.0) total += std::sqrt(dd / K) / denom;
  }
  return total / static_cast<double>(n);
}

double sign_agreement(const ProcessSeries& series) {
  const std::size_t K = series_len(series.ep, series.neg_bptt);
  const std::size_t n = series.elements();
  if (n == 0) return 1.0;
  std::size_t agree = 0;
  for (std::size_t e = 0; e < n; ++e) {
    double a = 0, b = 0;
    for (std::size_t t = 0; t < K; ++t) {
      a += series.ep[t][e];
      b += series.neg_bptt[t][e];
    }
    const int sa = (a > 0) - (a < 0), sb = (b > 0) - (b < 0);
    if (sa == sb) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(n);
}

double max_discrepancy(const ProcessRecord& record) {
  double worst = 0.0;
  for (const auto* group : {&record.neurons, &record.synapses})
    for (const ProcessSeries& s : *group)
      for (std::size_t t = 0; t < s.ep.size(); ++t) worst = std::max(worst, max_abs_diff(s.ep[t], s.neg_bptt[t]));
  return worst;
}

std::vector<LayerSummary> summarize(const ProcessRecord& record) {
  std::vector<LayerSummary> out;
  for (const auto* group : {&record.neurons, &record.synapses})
    for (const ProcessSeries& s : *group)
      out.push_back({s.name, rmse(s.ep, s.neg_bptt), sign_agreement(s), s.elements()});
  return out;
}

SawtoothReport sawtooth_check(const ProcessRecord& record, const Model& model, double ep_tolerance) {
  SawtoothReport rep;
  if (!model.is_bipartite()) return rep;
  rep.applicable = true;
  const auto depths = model.layer_depths();
  if (depths.size() != record.neurons.size()) throw DimensionError("sawtooth: record does not match the model");
  for (std::size_t l = 0; l < record.neurons.size(); ++l) {
    const ProcessSeries& s = record.neurons[l];
    double peak = 0.0;
    for (const Tensor& d : s.ep) peak = std::max(peak, max_abs(d));
    for (std::size_t i = 0; i < s.ep.size(); ++i) {
      const std::size_t t = s.first_t + i;
      if ((depths[l] + t) % 2 == 0) continue;
      const double b = max_abs(s.neg_bptt[i]);
      if (b != 0.0) rep.violations.push_back({s.name, t, "bptt", b});
      const double e = max_abs(s.ep[i]);
      const double leak = peak > 0.0 ? e / peak : 0.0;
      rep.ep_leak = std::max(rep.ep_leak, leak);
      if (leak > ep_tolerance) rep.violations.push_back({s.name, t, "ep", e});
    }
  }
  rep.passed = rep.violations.empty();
  return rep;
}

std::vector<CurveRow> curve_rows(const ProcessRecord& record, std::size_t per_layer) {
  std::vector<CurveRow> rows;
  std::uint64_t stream = 0;
  for (const auto* group : {&record.neurons, &record.synapses})
    for (const ProcessSeries& s : *group) {
      const std::size_t n = s.elements();
      std::vector<std::size_t> pick(n);
      std::iota(pick.begin(), pick.end(), std::size_t{0});
      if (per_layer > 0 && per_layer < n) {
        Rng rng(derive_seed(record.seed, stream));
        for (std::size_t i = 0; i < per_layer; ++i) std::swap(pick[i], pick[i + rng.below(n - i)]);
        pick.resize(per_layer);
        std::sort(pick.begin(), pick.end());
      }
      ++stream;
      for (std::size_t e : pick)
        for (std::size_t i = 0; i < s.ep.size(); ++i)
          rows.push_back({s.synapse ? "synapse" : "neuron", s.name, e, s.first_t + i, s.ep[i][e], s.neg_bptt[i][e]});
    }
  return rows;
}

void write_curves(const std::vector<CurveRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "kind,layer,flat_index,t,delta_ep,neg_grad_bptt\n";
  for (const CurveRow& r : rows)
    out << r.kind << ',' << r.layer << ',' << r.flat_index << ',' << r.t << ',' << fmt17(r.delta_ep) << ','
        << fmt17(r.neg_grad_bptt) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_summary(const std::vector<LayerSummary>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "layer,rmse,sign_agreement,n_elements\n";
  for (const LayerSummary& r : rows)
    out << r.layer << ',' << fmt17(r.rmse) << ',' << fmt17(r.sign_agreement) << ',' << r.n_elements << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void export_record(const ProcessRecord& record, const std::filesystem::path& dir, std::size_t per_layer) {
  std::filesystem::create_directories(dir);
  write_curves(curve_rows(record, per_layer), dir / "curves.csv");
  write_summary(summarize(record), dir / "summary.csv");
}

std::vector<CurveRow> read_curves(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    const auto c = split_csv(line);
    if (c.size() != 6) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    rows.push_back({c[0], c[1], std::stoull(c[2]), std::stoull(c[3]), std::stod(c[4]), std::stod(c[5])});
  }
  return rows;
}

std::vector<LayerSummary> read_summary(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<LayerSummary> rows;
  while (std::getline(in, line)) {
    const auto c = split_csv(line);
    if (c.size() != 4) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    rows.push_back({c[0], std::stod(c[1]), std::stod(c[2]), std::stoull(c[3])});
  }
  return rows;
}

}  // namespace eqprop
