#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eqprop/training.hpp"

namespace eqprop {

/// Flat `key = value` text grouped under `[section]` headers. `#` and `;`
/// start comments. Keys are addressed as "section.key".
class IniConfig {
 public:
  static IniConfig parse(const std::string& text, const std::string& origin = "<config>");
  static IniConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Throws ConfigError naming the key when it is absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Canonical text: sections and keys sorted.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

enum class DataSource { mnist, toy };

struct DataConfig {
  DataSource source = DataSource::mnist;
  std::filesystem::path dir;
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  std::string test_images = "t10k-images-idx3-ubyte";
  std::string test_labels = "t10k-labels-idx1-ubyte";
  /// When set, train and test sets are disjoint draws from this one file pair.
  std::string pool_images;
  std::string pool_labels;
  std::size_t subset_train = 0;  // 0 keeps every sample
  std::size_t subset_test = 0;
};

struct GduConfig {
  std::size_t batch_size = 20;
  double threshold = 1e-2;
  std::size_t per_layer = 5;
};

/// Everything a command needs, resolved from an IniConfig.
struct RunConfig {
  TrainConfig train;
  DataConfig data;
  GduConfig gdu;
};

enum class Command { gdu_check, train, eval };

/// Validates keys for `cmd` (required keys must be present, unknown keys
/// are rejected) and converts values.
RunConfig resolve(const IniConfig& ini, Command cmd);

/// Names of the shipped presets: GDU presets follow the theorem
/// demonstrations, training presets the training tables.
std::vector<std::string> preset_names(Command cmd);
std::optional<std::string> preset_text(const std::string& name, Command cmd);

/// Reads `source` as a file, or as a preset name when no such file exists.
IniConfig load_config(const std::string& source, Command cmd);

struct Datasets {
  Dataset train;
  Dataset test;
};

/// Resolves paths against `data.dir`, or $EQPROP_DATA_DIR when unset.
Datasets load_datasets(const DataConfig& data, std::uint64_t seed);
std::filesystem::path data_root(const DataConfig& data);

/// The samples a GDU run compares on: seeded toy samples, or a seeded draw
/// of gdu.batch_size training samples.
std::vector<Sample> gdu_batch(const RunConfig& rc);

}  // namespace eqprop
