#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eqprop/data.hpp"
#include "eqprop/models.hpp"

namespace eqprop {

enum class Algorithm { ep, bptt };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

/// Architecture selection: "toy", "eb-<n>h", "p-<n>h" or "p-conv".
enum class InitScheme { glorot, fan_in };

std::string init_name(InitScheme s);
InitScheme parse_init(const std::string& name);

struct ModelSpec {
  std::string arch = "p-1h";
  Activation activation{ActivationKind::sigmoid};
  double epsilon = 0.08;  // energy-based only
  bool clip = false;      // energy-based only
  std::size_t hidden = 512;
  std::size_t input = 784;
  std::size_t output = 10;
  InitScheme init = InitScheme::glorot;
};

std::unique_ptr<Model> build_model(const ModelSpec& spec);

struct TrainConfig {
  ModelSpec model;
  Hyperparams hp;
  std::vector<double> learning_rates;  // one per parameter group, output side first
  std::size_t epochs = 1;
  std::size_t batch_size = 20;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::ep;
  std::size_t threads = 1;

  /// Throws ConfigError when the config cannot drive `model`.
  void validate(const Model& model) const;
};

/// Uniform on ±sqrt(6 / (fan_in + fan_out)). For W[out×in] the fans are
/// the two extents; kernels [Cout×Cin×F×F] multiply both by F².
Tensor glorot_init(const Shape& shape, std::uint64_t seed);

/// Uniform on ±1/sqrt(fan_in), same fan convention as glorot_init.
Tensor fan_in_init(const Shape& shape, std::uint64_t seed);

/// Draws every parameter group from its own seed stream.
ParamSet init_params(const Model& model, std::uint64_t seed, InitScheme scheme = InitScheme::glorot);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_error = 0.0;  // running error of the free phase during the epoch
  double test_error = 0.0;
  double wall_seconds = 0.0;
};

/// Averaged mini-batch update for one batch: +Σ Δθ^EP (EP) or −∇θ^BPTT
/// (BPTT), before learning rates. `errors` receives per-sample
/// misclassifications of the relaxed free state.
ParamGrad batch_update(const Model& model, const ParamSet& params, const std::vector<const Sample*>& batch,
                       const TrainConfig& cfg, std::size_t* errors = nullptr);

using EpochCallback = std::function<void(const EpochRecord&, const ParamSet&)>;

/// Runs epochs start_epoch+1 .. cfg.epochs, updating `params` in place.
/// Each epoch visits the training set in an order drawn from (seed, epoch),
/// so a run resumed from a checkpoint matches the uninterrupted run.
std::vector<EpochRecord> train(const Model& model, ParamSet& params, const TrainConfig& cfg, const Dataset& train_set,
                               const Dataset& test_set, std::size_t start_epoch = 0,
                               const EpochCallback& on_epoch = {});

/// Fraction of samples whose argmax(s⁰_T) differs from argmax(y).
double evaluate(const Model& model, const ParamSet& params, const Dataset& data, std::size_t T,
                std::size_t threads = 1);

struct Checkpoint {
  std::string arch;
  std::string config;  // resolved config echo
  std::uint64_t seed = 0;
  std::size_t epochs_completed = 0;
  ParamSet params;
};

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);
/// Loads and checks the architecture id and parameter layout against `model`.
Checkpoint checkpoint_load(const std::filesystem::path& path, const Model& model);

}  // namespace eqprop
