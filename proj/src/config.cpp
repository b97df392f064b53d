#include "eqprop/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eqprop/errors.hpp"
#include "eqprop/rng.hpp"

namespace eqprop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

bool is_energy_based(const std::string& arch) { return arch == "toy" || arch.rfind("eb-", 0) == 0; }

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "model.arch",         "model.activation",   "model.epsilon",     "model.clip",        "model.hidden",
      "model.input",        "model.output",       "model.init",        "dynamics.T",        "dynamics.K",        "dynamics.beta",
      "train.learning_rates", "train.epochs",     "train.batch_size",  "train.algorithm",   "run.seed",
      "run.threads",        "data.source",        "data.dir",          "data.train_images", "data.train_labels",
      "data.test_images",   "data.test_labels",   "data.pool_images",  "data.pool_labels",  "data.subset_train",
      "data.subset_test",   "gdu.batch_size",     "gdu.threshold",     "gdu.per_layer"};
  return keys;
}

struct Preset {
  const char* arch;
  const char* activation;
  std::size_t T, K;
  const char* beta;
  const char* epsilon;  // nullptr for prototypical
  std::size_t epochs;
  const char* rates;
};

// Theorem demonstrations.
const Preset kGduPresets[] = {
    {"toy", "tanh", 5000, 80, "0.01", "0.08", 0, nullptr},
    {"eb-1h", "tanh", 800, 80, "0.001", "0.08", 0, nullptr},
    {"eb-2h", "tanh", 5000, 150, "0.01", "0.08", 0, nullptr},
    {"eb-3h", "tanh", 30000, 200, "0.02", "0.08", 0, nullptr},
    {"p-1h", "tanh", 150, 10, "0.01", nullptr, 0, nullptr},
    {"p-2h", "tanh", 1500, 40, "0.01", nullptr, 0, nullptr},
    {"p-3h", "tanh", 5000, 40, "0.015", nullptr, 0, nullptr},
    {"p-conv", "hard_sigmoid", 5000, 10, "0.02", nullptr, 0, nullptr},
};

// Training runs.
const Preset kTrainPresets[] = {
    {"eb-1h", "sigmoid", 100, 12, "0.5", "0.2", 30, "0.1, 0.05"},
    {"eb-2h", "sigmoid", 500, 40, "0.8", "0.2", 50, "0.4, 0.1, 0.01"},
    {"p-1h", "sigmoid", 30, 10, "0.1", nullptr, 30, "0.08, 0.04"},
    {"p-2h", "sigmoid", 100, 20, "0.5", nullptr, 50, "0.2, 0.05, 0.005"},
    {"p-3h", "sigmoid", 180, 20, "0.5", nullptr, 100, "0.2, 0.05, 0.01, 0.002"},
    {"p-conv", "hard_sigmoid", 200, 10, "0.4", nullptr, 40, "0.15, 0.035, 0.015"},
};

std::string render(const Preset& p, Command cmd) {
  std::ostringstream o;
  const bool toy = std::string(p.arch) == "toy";
  o << "[model]\narch = " << p.arch << "\nactivation = " << p.activation << "\n";
  if (p.epsilon) o << "epsilon = " << p.epsilon << "\nclip = " << (cmd == Command::gdu_check ? "false" : "true") << "\n";
  if (toy) o << "input = 10\nhidden = 50\noutput = 5\n";
  o << "init = " << (cmd == Command::gdu_check ? "fan_in" : "glorot") << "\n";
  o << "\n[dynamics]\nT = " << p.T << "\nK = " << p.K << "\nbeta = " << p.beta << "\n";
  o << "\n[run]\nseed = 0\nthreads = 1\n";
  o << "\n[data]\nsource = " << (toy ? "toy" : "mnist") << "\n";
  if (cmd == Command::gdu_check) {
    o << "\n[gdu]\nbatch_size = " << (toy ? 1 : 20) << "\nthreshold = 0.01\nper_layer = 5\n";
  } else {
    o << "\n[train]\nlearning_rates = " << p.rates << "\nepochs = " << p.epochs
      << "\nbatch_size = 20\nalgorithm = ep\n";
  }
  return o.str();
}

}  // namespace

IniConfig IniConfig::parse(const std::string& text, const std::string& origin) {
  IniConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const std::string full = section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key " + full);
    cfg.values_[full] = trim(line.substr(eq + 1));
  }
  return cfg;
}

IniConfig IniConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& IniConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key + " in " + origin_);
  return it->second;
}

std::string IniConfig::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string IniConfig::to_text() const {
  std::ostringstream o;
  std::string current;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) o << "\n";
      o << "[" << section << "]\n";
      current = section;
    }
    o << key.substr(dot + 1) << " = " << value << "\n";
  }
  return o.str();
}

RunConfig resolve(const IniConfig& ini, Command cmd) {
  for (const auto& [key, value] : ini.values())
    if (!known_keys().count(key)) throw ConfigError("unknown config key " + key);

  RunConfig rc;
  TrainConfig& tc = rc.train;
  ModelSpec& ms = tc.model;
  ms.arch = ini.get("model.arch");
  ms.activation = Activation::parse(ini.get("model.activation"));
  const bool eb = is_energy_based(ms.arch);
  if (eb) ms.epsilon = to_double("model.epsilon", ini.get("model.epsilon"));
  ms.clip = to_bool("model.clip", ini.get_or("model.clip", "false"));
  const bool toy = ms.arch == "toy";
  ms.hidden = to_size("model.hidden", ini.get_or("model.hidden", toy ? "50" : "512"));
  ms.input = to_size("model.input", ini.get_or("model.input", toy ? "10" : "784"));
  ms.output = to_size("model.output", ini.get_or("model.output", toy ? "5" : "10"));
  ms.init = parse_init(ini.get_or("model.init", "glorot"));

  tc.hp.T = to_size("dynamics.T", ini.get("dynamics.T"));
  tc.hp.K = to_size("dynamics.K", ini.get("dynamics.K"));
  tc.hp.beta = to_double("dynamics.beta", ini.get("dynamics.beta"));
  tc.hp.epsilon = eb ? ms.epsilon : 1.0;

  tc.seed = to_size("run.seed", ini.get_or("run.seed", "0"));
  tc.threads = to_size("run.threads", ini.get_or("run.threads", "1"));

  const std::string source = ini.get("data.source");
  if (source == "mnist") {
    rc.data.source = DataSource::mnist;
  } else if (source == "toy") {
    rc.data.source = DataSource::toy;
  } else {
    throw ConfigError("data.source: expected mnist or toy, got '" + source + "'");
  }
  rc.data.dir = ini.get_or("data.dir", "");
  rc.data.train_images = ini.get_or("data.train_images", rc.data.train_images);
  rc.data.train_labels = ini.get_or("data.train_labels", rc.data.train_labels);
  rc.data.test_images = ini.get_or("data.test_images", rc.data.test_images);
  rc.data.test_labels = ini.get_or("data.test_labels", rc.data.test_labels);
  rc.data.pool_images = ini.get_or("data.pool_images", "");
  rc.data.pool_labels = ini.get_or("data.pool_labels", "");
  if (rc.data.pool_images.empty() != rc.data.pool_labels.empty()) {
    throw ConfigError("data.pool_images and data.pool_labels must be given together");
  }
  rc.data.subset_train = to_size("data.subset_train", ini.get_or("data.subset_train", "0"));
  rc.data.subset_test = to_size("data.subset_test", ini.get_or("data.subset_test", "0"));

  if (cmd == Command::gdu_check) {
    rc.gdu.batch_size = to_size("gdu.batch_size", ini.get("gdu.batch_size"));
    rc.gdu.threshold = to_double("gdu.threshold", ini.get("gdu.threshold"));
    rc.gdu.per_layer = to_size("gdu.per_layer", ini.get_or("gdu.per_layer", "5"));
    if (rc.gdu.batch_size == 0) throw ConfigError("gdu.batch_size must be at least 1");
  } else {
    const auto rates = to_list("train.learning_rates", ini.get("train.learning_rates"));
    tc.learning_rates = rates;
    tc.epochs = to_size("train.epochs", ini.get("train.epochs"));
    tc.batch_size = to_size("train.batch_size", ini.get_or("train.batch_size", "20"));
    tc.algorithm = parse_algorithm(ini.get_or("train.algorithm", "ep"));
    if (rc.data.source != DataSource::mnist) throw ConfigError("training needs data.source = mnist");
  }
  return rc;
}

std::vector<std::string> preset_names(Command cmd) {
  std::vector<std::string> out;
  if (cmd == Command::gdu_check)
    for (const Preset& p : kGduPresets) out.push_back(p.arch);
  else
    for (const Preset& p : kTrainPresets) out.push_back(p.arch);
  return out;
}

std::optional<std::string> preset_text(const std::string& name, Command cmd) {
  if (cmd == Command::gdu_check) {
    for (const Preset& p : kGduPresets)
      if (name == p.arch) return render(p, cmd);
  } else {
    for (const Preset& p : kTrainPresets)
      if (name == p.arch) return render(p, cmd);
  }
  return std::nullopt;
}

IniConfig load_config(const std::string& source, Command cmd) {
  if (std::filesystem::exists(source)) return IniConfig::load(source);
  if (auto text = preset_text(source, cmd)) return IniConfig::parse(*text, "preset " + source);
  throw ConfigError("no config file or preset named '" + source + "'");
}

std::filesystem::path data_root(const DataConfig& data) {
  if (!data.dir.empty()) return data.dir;
  if (const char* env = std::getenv("EQPROP_DATA_DIR"); env && *env) return env;
  return "data/mnist";
}

Datasets load_datasets(const DataConfig& data, std::uint64_t seed) {
  if (data.source != DataSource::mnist) throw ConfigError("load_datasets: source is not mnist");
  const auto root = data_root(data);
  Datasets out;
  const std::uint64_t split_seed = derive_seed(seed, 0x53504c4954ull);
  if (!data.pool_images.empty()) {
    const Dataset pool = load_mnist(root / data.pool_images, root / data.pool_labels);
    const std::size_t n_train = data.subset_train ? data.subset_train : pool.size() - data.subset_test;
    const std::size_t n_test = data.subset_test ? data.subset_test : pool.size() - n_train;
    auto [a, b] = disjoint_split(pool, n_train, n_test, split_seed);
    out.train = std::move(a);
    out.test = std::move(b);
    return out;
  }
  out.train = load_mnist(root / data.train_images, root / data.train_labels);
  out.test = load_mnist(root / data.test_images, root / data.test_labels);
  if (data.subset_train) out.train = subset(out.train, data.subset_train, split_seed);
  if (data.subset_test) out.test = subset(out.test, data.subset_test, derive_seed(split_seed, 1));
  return out;
}

std::vector<Sample> gdu_batch(const RunConfig& rc) {
  const std::uint64_t seed = rc.train.seed;
  std::vector<Sample> batch;
  if (rc.data.source == DataSource::toy) {
    for (std::size_t i = 0; i < rc.gdu.batch_size; ++i) {
      batch.push_back(
          synthetic_toy_sample(derive_seed(seed, 0x544f59ull + i), rc.train.model.input, rc.train.model.output));
    }
    return batch;
  }
  const Datasets ds = load_datasets(rc.data, seed);
  return subset(ds.train, rc.gdu.batch_size, derive_seed(seed, 0x4744550000ull)).samples;
}

}  // namespace eqprop
