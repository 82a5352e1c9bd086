#include <fstream>
#include <set>
#include <sstream>

#include "dimglo/training.hpp"
#include "json.hpp"

namespace dimglo {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& message) {
  throw ConfigError(message);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& section) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.contains(key)) {
      config_fail("unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
T read_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail("bad value for '" + key + "': " + e.what());
  }
}

DomainSpec parse_domain(const json& obj, const std::string& section) {
  reject_unknown_keys(obj,
                      {"identities", "images_per_identity", "cameras",
                       "latent_dim", "camera_scales", "camera_scale_max",
                       "noise_sigma", "shift_strength", "shift_offset"},
                      section);
  DomainSpec spec;
  spec.identities = read_or(obj, "identities", spec.identities);
  spec.images_per_identity =
      read_or(obj, "images_per_identity", spec.images_per_identity);
  spec.cameras = read_or(obj, "cameras", spec.cameras);
  spec.latent_dim = read_or(obj, "latent_dim", spec.latent_dim);
  spec.noise_sigma = read_or(obj, "noise_sigma", spec.noise_sigma);
  spec.shift_strength = read_or(obj, "shift_strength", spec.shift_strength);
  spec.shift_offset = read_or(obj, "shift_offset", spec.shift_offset);
  if (obj.contains("camera_scales")) {
    spec.camera_scales = read_or(obj, "camera_scales", spec.camera_scales);
  } else if (obj.contains("camera_scale_max")) {
    spec.camera_scales = DomainSpec::ramp_scales(
        spec.cameras, read_or(obj, "camera_scale_max", 0.5));
  }
  return spec;
}

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << line_of_byte(json_text, e.byte)
        << ": " << e.what();
    config_fail(msg.str());
  }
  if (!root.is_object()) config_fail("config root must be an object");
  reject_unknown_keys(root, {"seed", "mode", "train", "source", "target"},
                      "config root");

  RunConfig config;
  config.train.seed = read_or<std::uint64_t>(root, "seed", config.train.seed);
  if (root.contains("mode")) {
    config.train.mode = mode_from_name(read_or<std::string>(root, "mode", ""));
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown_keys(
        t,
        {"alpha", "beta", "lambda_go", "lambda_lo", "lambda_dim",
         "source_batch", "target_batch", "augment_copies", "augment_sigma",
         "epochs", "lr", "lr_decay", "lr_decay_interval", "go_start_epoch",
         "k1", "k2", "lambda_rr", "min_cluster_size", "min_samples",
         "mmd_bandwidth", "encoder_input", "encoder_hidden", "encoder_feature",
         "dnet_hidden", "eval_interval", "checkpoint_interval"},
        "train");
    TrainConfig& c = config.train;
    c.alpha = read_or(t, "alpha", c.alpha);
    c.beta = read_or(t, "beta", c.beta);
    c.lambda_go = read_or(t, "lambda_go", c.lambda_go);
    c.lambda_lo = read_or(t, "lambda_lo", c.lambda_lo);
    c.lambda_dim = read_or(t, "lambda_dim", c.lambda_dim);
    c.source_batch = read_or(t, "source_batch", c.source_batch);
    c.target_batch = read_or(t, "target_batch", c.target_batch);
    c.augment_copies = read_or(t, "augment_copies", c.augment_copies);
    c.augment_sigma = read_or(t, "augment_sigma", c.augment_sigma);
    c.epochs = read_or(t, "epochs", c.epochs);
    c.lr = read_or(t, "lr", c.lr);
    c.lr_decay = read_or(t, "lr_decay", c.lr_decay);
    c.lr_decay_interval = read_or(t, "lr_decay_interval", c.lr_decay_interval);
    c.go_start_epoch = read_or(t, "go_start_epoch", c.go_start_epoch);
    c.k_reciprocal.k1 = read_or(t, "k1", c.k_reciprocal.k1);
    c.k_reciprocal.k2 = read_or(t, "k2", c.k_reciprocal.k2);
    c.k_reciprocal.lambda = read_or(t, "lambda_rr", c.k_reciprocal.lambda);
    c.min_cluster_size = read_or(t, "min_cluster_size", c.min_cluster_size);
    c.min_samples = read_or(t, "min_samples", c.min_samples);
    c.mmd_bandwidth = read_or(t, "mmd_bandwidth", c.mmd_bandwidth);
    c.encoder_input = read_or(t, "encoder_input", c.encoder_input);
    c.encoder_hidden = read_or(t, "encoder_hidden", c.encoder_hidden);
    c.encoder_feature = read_or(t, "encoder_feature", c.encoder_feature);
    c.dnet_hidden = read_or(t, "dnet_hidden", c.dnet_hidden);
    c.eval_interval = read_or(t, "eval_interval", c.eval_interval);
    c.checkpoint_interval =
        read_or(t, "checkpoint_interval", c.checkpoint_interval);
  }
  if (root.contains("source")) {
    config.source = parse_domain(root.at("source"), "source");
  }
  if (root.contains("target")) {
    config.target = parse_domain(root.at("target"), "target");
  }
  config.train.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_json(const RunConfig& config) {
  json root;
  root["seed"] = config.train.seed;
  root["mode"] = mode_name(config.train.mode);
  json t;
  const TrainConfig& c = config.train;
  t["alpha"] = c.alpha;
  t["beta"] = c.beta;
  t["lambda_go"] = c.lambda_go;
  t["lambda_lo"] = c.lambda_lo;
  t["lambda_dim"] = c.lambda_dim;
  t["source_batch"] = c.source_batch;
  t["target_batch"] = c.target_batch;
  t["augment_copies"] = c.augment_copies;
  t["augment_sigma"] = c.augment_sigma;
  t["epochs"] = c.epochs;
  t["lr"] = c.lr;
  t["lr_decay"] = c.lr_decay;
  t["lr_decay_interval"] = c.lr_decay_interval;
  t["go_start_epoch"] = c.go_start_epoch;
  t["k1"] = c.k_reciprocal.k1;
  t["k2"] = c.k_reciprocal.k2;
  t["lambda_rr"] = c.k_reciprocal.lambda;
  t["min_cluster_size"] = c.min_cluster_size;
  t["min_samples"] = c.min_samples;
  t["mmd_bandwidth"] = c.mmd_bandwidth;
  t["encoder_input"] = c.encoder_input;
  t["encoder_hidden"] = c.encoder_hidden;
  t["encoder_feature"] = c.encoder_feature;
  t["dnet_hidden"] = c.dnet_hidden;
  t["eval_interval"] = c.eval_interval;
  t["checkpoint_interval"] = c.checkpoint_interval;
  root["train"] = t;
  auto domain_json = [](const DomainSpec& spec) {
    json d;
    d["identities"] = spec.identities;
    d["images_per_identity"] = spec.images_per_identity;
    d["cameras"] = spec.cameras;
    d["latent_dim"] = spec.latent_dim;
    if (!spec.camera_scales.empty()) d["camera_scales"] = spec.camera_scales;
    d["noise_sigma"] = spec.noise_sigma;
    d["shift_strength"] = spec.shift_strength;
    d["shift_offset"] = spec.shift_offset;
    return d;
  };
  root["source"] = domain_json(config.source);
  root["target"] = domain_json(config.target);
  return root.dump(2);
}

Benchmark build_benchmark(const RunConfig& config) {
  Rng rng = make_rng(config.train.seed, 10);
  return make_benchmark(config.source, config.target, rng);
}

}  // namespace dimglo
