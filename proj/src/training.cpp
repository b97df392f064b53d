#include "eqprop/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>

#include "eqprop/engine.hpp"
#include "eqprop/errors.hpp"
#include "eqprop/parallel.hpp"
#include "eqprop/rng.hpp"

namespace eqprop {

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'P', 'R', 'O', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kShuffleStream = 0x5348554646ull;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

struct SampleUpdate {
  ParamGrad update;
  bool wrong = false;
};

SampleUpdate sample_update(const Model& model, const ParamSet& params, const Sample& s, const TrainConfig& cfg) {
  const InputDrive drive = model.bind(params, s.x);
  const std::size_t keep = cfg.algorithm == Algorithm::bptt ? cfg.hp.K : 1;
  const Trajectory traj = relax_free(model, params, drive, cfg.hp.T, Storage::lean, keep);
  SampleUpdate out;
  out.wrong = argmax(traj.final_state().s[0]) != argmax(s.y);
  if (cfg.algorithm == Algorithm::ep) {
    out.update = run_ep_phase(model, params, drive, s.y, traj.final_state(), cfg.hp.beta, cfg.hp.K, false).total;
  } else {
    out.update = run_bptt(model, params, drive, traj, s.y, cfg.hp.K, false).total;
    out.update *= -1.0;
  }
  return out;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw CheckpointError("cannot write " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw CheckpointError("write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError(path_.string() + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str(std::size_t limit = 1u << 24) {
    const std::uint64_t n = u64();
    if (n > limit) throw CheckpointError(path_.string() + ": corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

std::string algorithm_name(Algorithm a) { return a == Algorithm::ep ? "ep" : "bptt"; }

Algorithm parse_algorithm(const std::string& name) {
  if (name == "ep") return Algorithm::ep;
  if (name == "bptt") return Algorithm::bptt;
  throw ConfigError("unknown algorithm '" + name + "' (expected ep or bptt)");
}

std::unique_ptr<Model> build_model(const ModelSpec& spec) {
  if (spec.arch == "toy") return make_toy_model({spec.output, spec.hidden, spec.input, spec.activation, spec.epsilon, spec.clip});
  if (spec.arch == "p-conv") {
    ConvConfig c;
    c.fc_sizes = {spec.output};
    c.activation = spec.activation;
    return make_conv_model(c);
  }
  static const std::regex layered(R"((eb|p)-([0-9]+)h)");
  std::smatch m;
  if (std::regex_match(spec.arch, m, layered)) {
    const std::size_t hidden_layers = std::stoul(m[2]);
    if (hidden_layers == 0 || hidden_layers > 16) throw ConfigError("arch '" + spec.arch + "': 1 to 16 hidden layers");
    LayeredConfig c;
    c.sizes = {spec.output};
    for (std::size_t i = 0; i < hidden_layers; ++i) c.sizes.push_back(spec.hidden);
    c.sizes.push_back(spec.input);
    c.activation = spec.activation;
    c.epsilon = spec.epsilon;
    c.clip = spec.clip;
    return m[1] == "eb" ? make_energy_layered_model(c) : make_prototypical_layered_model(c);
  }
  throw ConfigError("unknown architecture '" + spec.arch + "'");
}

void TrainConfig::validate(const Model& model) const {
  hp.validate(model.setting());
  const std::size_t groups = model.param_layout().size();
  if (learning_rates.size() != groups) {
    throw ConfigError("learning_rates has " + std::to_string(learning_rates.size()) + " entries, " + model.id() +
                      " has " + std::to_string(groups) + " parameter groups");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

namespace {

Tensor uniform_init(const Shape& shape, std::uint64_t seed, bool glorot) {
  if (shape.size() < 2) throw DimensionError("weight init needs rank >= 2, got " + shape_string(shape));
  std::size_t receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
  const double fan_out = static_cast<double>(shape[0] * receptive);
  const double fan_in = static_cast<double>(shape[1] * receptive);
  const double bound = glorot ? std::sqrt(6.0 / (fan_in + fan_out)) : 1.0 / std::sqrt(fan_in);
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Tensor glorot_init(const Shape& shape, std::uint64_t seed) { return uniform_init(shape, seed, true); }

Tensor fan_in_init(const Shape& shape, std::uint64_t seed) { return uniform_init(shape, seed, false); }

std::string init_name(InitScheme s) { return s == InitScheme::glorot ? "glorot" : "fan_in"; }

InitScheme parse_init(const std::string& name) {
  if (name == "glorot") return InitScheme::glorot;
  if (name == "fan_in") return InitScheme::fan_in;
  throw ConfigError("unknown init '" + name + "' (expected glorot or fan_in)");
}

ParamSet init_params(const Model& model, std::uint64_t seed, InitScheme scheme) {
  ParamSet p = model.zero_params();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const std::uint64_t stream = derive_seed(seed, k);
    p[k] = scheme == InitScheme::glorot ? glorot_init(p[k].shape(), stream) : fan_in_init(p[k].shape(), stream);
  }
  return p;
}

ParamGrad batch_update(const Model& model, const ParamSet& params, const std::vector<const Sample*>& batch,
                       const TrainConfig& cfg, std::size_t* errors) {
  if (batch.empty()) throw PreconditionError("empty batch");
  std::vector<SampleUpdate> parts(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) { parts[i] = sample_update(model, params, *batch[i], cfg); });
  ParamGrad sum = std::move(parts[0].update);
  std::size_t wrong = parts[0].wrong;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    sum += parts[i].update;
    wrong += parts[i].wrong;
  }
  sum *= 1.0 / static_cast<double>(batch.size());
  if (errors) *errors += wrong;
  return sum;
}

std::vector<EpochRecord> train(const Model& model, ParamSet& params, const TrainConfig& cfg, const Dataset& train_set,
                               const Dataset& test_set, std::size_t start_epoch, const EpochCallback& on_epoch) {
  cfg.validate(model);
  model.check_params(params);
  if (train_set.empty()) throw PreconditionError("empty training set");
  std::vector<EpochRecord> history;
  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::size_t wrong = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
        batch.push_back(&train_set.samples[order[i]]);
      ParamGrad upd;
      try {
        upd = batch_update(model, params, batch, cfg, &wrong);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("epoch ") + std::to_string(epoch) + " batch " +
                                  std::to_string(b / cfg.batch_size) + " " + e.phase(),
                              e.step(), e.what());
      }
      for (std::size_t k = 0; k < params.size(); ++k) params[k].add_scaled(upd[k], cfg.learning_rates[k]);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_error = static_cast<double>(wrong) / static_cast<double>(train_set.size());
    rec.test_error = test_set.empty() ? std::nan("") : evaluate(model, params, test_set, cfg.hp.T, cfg.threads);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(rec);
    if (on_epoch) on_epoch(rec, params);
  }
  return history;
}

double evaluate(const Model& model, const ParamSet& params, const Dataset& data, std::size_t T, std::size_t threads) {
  if (data.empty()) throw PreconditionError("cannot evaluate on an empty dataset");
  std::vector<char> wrong(data.size(), 0);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const Sample& s = data.samples[i];
    const Trajectory traj = relax_free(model, params, model.bind(params, s.x), T);
    wrong[i] = argmax(traj.final_state().s[0]) != argmax(s.y);
  });
  const std::size_t n = static_cast<std::size_t>(std::count(wrong.begin(), wrong.end(), 1));
  return static_cast<double>(n) / static_cast<double>(data.size());
}

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.str(ckpt.arch);
  w.str(ckpt.config);
  w.u64(ckpt.seed);
  w.u64(ckpt.epochs_completed);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
    const Tensor& t = ckpt.params[k];
    w.str(ckpt.params.names[k]);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.bytes(t.data(), t.size() * sizeof(double));
  }
  w.finish();
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError(path.string() + ": not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointError(path.string() + ": version " + std::to_string(version) + ", expected " + std::to_string(kVersion));
  }
  Checkpoint c;
  c.arch = r.str();
  c.config = r.str();
  c.seed = r.u64();
  c.epochs_completed = r.u64();
  const std::uint32_t groups = r.u32();
  if (groups > 1024) throw CheckpointError(path.string() + ": corrupt group count");
  for (std::uint32_t k = 0; k < groups; ++k) {
    c.params.names.push_back(r.str(4096));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CheckpointError(path.string() + ": corrupt tensor rank");
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
      if (d == 0 || count > (1ull << 32)) throw CheckpointError(path.string() + ": corrupt tensor shape");
    }
    Tensor t(shape);
    r.bytes(t.data(), t.size() * sizeof(double));
    c.params.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw CheckpointError(path.string() + ": trailing bytes after checkpoint");
  return c;
}

Checkpoint checkpoint_load(const std::filesystem::path& path, const Model& model) {
  Checkpoint c = checkpoint_load(path);
  if (c.arch != model.id()) {
    throw CheckpointError(path.string() + ": checkpoint holds " + c.arch + ", expected " + model.id());
  }
  const auto layout = model.param_layout();
  bool ok = layout.size() == c.params.size();
  for (std::size_t k = 0; ok && k < layout.size(); ++k)
    ok = layout[k].name == c.params.names[k] && layout[k].shape == c.params[k].shape();
  if (!ok) throw CheckpointError(path.string() + ": parameter layout does not match " + model.id());
  return c;
}

}  // namespace eqprop
