#include "modnet/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "modnet/error.hpp"

namespace modnet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known |= (it.key() == k);
    if (!known) {
      throw ConfigError("unknown key '" + section + "." + it.key() + "'");
    }
  }
}

template <typename T>
T get_required(const json& j, const std::string& section, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing key '" + section + "." + std::string(key) + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + section + "." + std::string(key) + "' has the wrong type");
  }
}

template <typename T>
T get_optional(const json& j, const std::string& section, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + section + "." + std::string(key) + "' has the wrong type");
  }
}

json parse_scalar_override(const std::string& value) {
  // Accept JSON literals; fall back to a plain string.
  try {
    return json::parse(value);
  } catch (const json::exception&) {
    return json(value);
  }
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + spec + "' is not of the form section.key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override '" + spec + "' names no key");
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = parse_scalar_override(value);
}

AttributeSpec parse_dataset(const json& j) {
  check_keys(j, "dataset",
             {"attributes", "correlation", "samples", "input", "height", "width", "dim",
              "noise_sigma", "seed"});
  AttributeSpec spec;
  spec.attribute_count = get_required<int>(j, "dataset", "attributes");
  spec.sample_count = get_required<int>(j, "dataset", "samples");
  const std::string kind = get_optional<std::string>(j, "dataset", "input", "vector");
  if (kind == "vector") {
    spec.input_kind = InputKind::Vector;
    spec.dim = get_required<int>(j, "dataset", "dim");
  } else if (kind == "image") {
    spec.input_kind = InputKind::Image;
    spec.height = get_required<int>(j, "dataset", "height");
    spec.width = get_required<int>(j, "dataset", "width");
  } else {
    throw ConfigError("dataset.input must be 'vector' or 'image'");
  }
  spec.noise_sigma = get_optional<double>(j, "dataset", "noise_sigma", 1.0);
  spec.seed = get_optional<uint64_t>(j, "dataset", "seed", 0);
  const auto corr = get_required<std::vector<std::vector<double>>>(j, "dataset", "correlation");
  spec.correlation = corr;
  spec.validate();
  cholesky_psd(spec.correlation);  // reject non-PSD matrices before any work
  return spec;
}

NetworkShape parse_network(const json& j, const AttributeSpec& ds) {
  check_keys(j, "network", {"conv", "conv1_channels", "block_channels", "embedding_dim"});
  NetworkShape shape;
  shape.conv = get_optional<bool>(j, "network", "conv", ds.input_kind == InputKind::Image);
  if (shape.conv && ds.input_kind != InputKind::Image) {
    throw ConfigError("network.conv requires dataset.input = 'image'");
  }
  if (ds.input_kind == InputKind::Image) {
    shape.input_h = ds.height;
    shape.input_w = ds.width;
    shape.input_c = 1;
  } else {
    shape.input_h = 1;
    shape.input_w = 1;
    shape.input_c = ds.dim;
  }
  shape.conv1_channels = get_optional<int>(j, "network", "conv1_channels", 8);
  shape.block_channels = get_optional<std::vector<int>>(j, "network", "block_channels", {16, 16});
  shape.embedding_dim = get_required<int>(j, "network", "embedding_dim");
  return shape;
}

void parse_train(const json& j, TrainConfig& cfg) {
  check_keys(j, "train",
             {"variant", "from_block", "mod_variant", "alpha", "beta", "lambda",
              "normalize_embeddings", "batch_size", "epochs", "tasks", "seed", "learning_rate",
              "ucr_enabled", "branch_dim", "init_checkpoint", "relevance_triples",
              "heldout_fraction", "checkpoint_every"});
  cfg.variant = parse_variant(get_optional<std::string>(j, "train", "variant", "modulated"));
  cfg.insertion.from_block = get_optional<std::string>(j, "train", "from_block", "block2");
  const std::string mv = get_optional<std::string>(j, "train", "mod_variant", "scaling");
  if (mv == "scaling" || mv == "scaling-vector") {
    cfg.insertion.variant = ModVariant::ScalingVector;
  } else if (mv == "projection" || mv == "projection-matrix") {
    cfg.insertion.variant = ModVariant::ProjectionMatrix;
  } else {
    throw ConfigError("train.mod_variant must be 'scaling' or 'projection'");
  }
  cfg.margins.alpha = get_optional<double>(j, "train", "alpha", 0.2);
  cfg.margins.beta = get_optional<double>(j, "train", "beta", 0.1);
  cfg.margins.lambda = get_optional<double>(j, "train", "lambda", 0.0);
  cfg.normalize_embeddings = get_optional<bool>(j, "train", "normalize_embeddings", false);
  cfg.batch_size = get_optional<int>(j, "train", "batch_size", 40);
  cfg.epochs = get_optional<int>(j, "train", "epochs", 30);
  cfg.tasks = get_required<int>(j, "train", "tasks");
  cfg.seed = get_optional<uint64_t>(j, "train", "seed", 1);
  cfg.learning_rate = get_optional<double>(j, "train", "learning_rate", 0.01);
  cfg.ucr_enabled = get_optional<bool>(j, "train", "ucr_enabled", true);
  cfg.branch_dim = get_optional<int>(j, "train", "branch_dim", 0);
  cfg.init_checkpoint = get_optional<std::string>(j, "train", "init_checkpoint", "");
  cfg.checkpoint_every = get_optional<int>(j, "train", "checkpoint_every", 0);
  cfg.heldout_fraction = get_optional<double>(j, "train", "heldout_fraction", 0.2);
  if (j.contains("relevance_triples")) {
    const auto triples =
        get_required<std::vector<std::vector<int>>>(j, "train", "relevance_triples");
    for (const auto& t : triples) {
      if (t.size() != 3) throw ConfigError("train.relevance_triples entries must have 3 task ids");
      cfg.relevance_triples.push_back({t[0], t[1], t[2]});
    }
  }
}

}  // namespace

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string ExperimentConfig::dataset_path() const {
  return dataset_file.empty() ? output_dir + "/dataset.bin" : dataset_file;
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(root, o);

  check_keys(root, "<root>",
             {"dataset", "network", "train", "eval", "compare", "output_dir", "dataset_file",
              "ucr_passes"});

  ExperimentConfig cfg;
  if (!root.contains("dataset")) throw ConfigError("missing section 'dataset'");
  cfg.dataset = parse_dataset(root.at("dataset"));

  if (!root.contains("network")) throw ConfigError("missing section 'network'");
  cfg.train.net = parse_network(root.at("network"), cfg.dataset);

  if (!root.contains("train")) throw ConfigError("missing section 'train'");
  parse_train(root.at("train"), cfg.train);

  if (root.contains("eval")) {
    const json& je = root.at("eval");
    check_keys(je, "eval", {"triplets_per_task", "seed"});
    cfg.train.eval_triplets_per_task = get_optional<int>(je, "eval", "triplets_per_task", 200);
    cfg.train.eval_seed = get_optional<uint64_t>(je, "eval", "seed", 12345);
  }

  if (root.contains("compare")) {
    const json& jc = root.at("compare");
    check_keys(jc, "compare", {"variants", "seeds", "from_blocks"});
    cfg.compare_variants =
        get_optional<std::vector<std::string>>(jc, "compare", "variants", {"modulated"});
    cfg.seeds = get_optional<std::vector<uint64_t>>(jc, "compare", "seeds", {cfg.train.seed});
    cfg.compare_from_blocks =
        get_optional<std::vector<std::string>>(jc, "compare", "from_blocks", {});
    for (const auto& v : cfg.compare_variants) parse_variant(v);  // reject unknown names early
  } else {
    cfg.compare_variants = {variant_name(cfg.train.variant)};
    cfg.seeds = {cfg.train.seed};
  }

  cfg.output_dir = get_optional<std::string>(root, "<root>", "output_dir", "out");
  cfg.dataset_file = get_optional<std::string>(root, "<root>", "dataset_file", "");
  cfg.ucr_passes = get_optional<int>(root, "<root>", "ucr_passes", 1);
  if (cfg.ucr_passes < 1) throw ConfigError("ucr_passes must be >= 1");

  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(root.dump())));
  cfg.config_hash = hex;

  // Surface obvious cross-field problems now rather than mid-run.
  cfg.train.validate(cfg.dataset.attribute_count);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

}  // namespace modnet
