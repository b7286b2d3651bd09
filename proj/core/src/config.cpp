#include "msfmamba/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace msf {

namespace {

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("setting " + key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("setting " + key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("setting " + key + ": expected true/false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto int_field = [&t](const char* name, auto member_of) {
      t[name] = [member_of](RunConfig& c, const std::string& k, const std::string& v) {
        member_of(c) = parse_int(k, v);
      };
    };
    auto real_field = [&t](const char* name, auto member_of) {
      t[name] = [member_of](RunConfig& c, const std::string& k, const std::string& v) {
        member_of(c) = parse_double(k, v);
      };
    };
    auto bool_field = [&t](const char* name, auto member_of) {
      t[name] = [member_of](RunConfig& c, const std::string& k, const std::string& v) {
        member_of(c) = parse_bool(k, v);
      };
    };
    int_field("L", [](RunConfig& c) -> int& { return c.model.L; });
    int_field("Np", [](RunConfig& c) -> int& { return c.model.Np; });
    int_field("N", [](RunConfig& c) -> int& { return c.model.N; });
    int_field("C", [](RunConfig& c) -> int& { return c.model.C; });
    int_field("patch", [](RunConfig& c) -> int& { return c.model.patch; });
    int_field("routes", [](RunConfig& c) -> int& { return c.model.routes; });
    int_field("down_paths", [](RunConfig& c) -> int& { return c.model.down_paths; });
    int_field("aux_channels", [](RunConfig& c) -> int& { return c.model.aux_channels; });
    int_field("classes", [](RunConfig& c) -> int& { return c.model.classes; });
    bool_field("share_route_params", [](RunConfig& c) -> bool& { return c.model.share_route_params; });
    bool_field("use_spe", [](RunConfig& c) -> bool& { return c.model.use_spe; });
    bool_field("use_fus", [](RunConfig& c) -> bool& { return c.model.use_fus; });
    t["interp"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "bilinear") c.model.interp = InterpMode::Bilinear;
      else if (v == "nearest") c.model.interp = InterpMode::Nearest;
      else throw ConfigError("setting " + k + ": expected bilinear|nearest, got '" + v + "'");
    };
    t["a_init"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "fixed") c.model.a_init = AInit::Fixed;
      else if (v == "random") c.model.a_init = AInit::Random;
      else throw ConfigError("setting " + k + ": expected fixed|random, got '" + v + "'");
    };

    int_field("epochs", [](RunConfig& c) -> int& { return c.train.epochs; });
    int_field("batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
    real_field("lr", [](RunConfig& c) -> double& { return c.train.lr; });
    real_field("beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
    real_field("beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
    real_field("adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; });
    int_field("save_every", [](RunConfig& c) -> int& { return c.train.save_every; });
    int_field("threads", [](RunConfig& c) -> int& { return c.train.threads; });
    real_field("early_stop_oa", [](RunConfig& c) -> double& { return c.train.early_stop_oa; });
    t["optimizer"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "adam") c.train.optimizer = OptimizerKind::Adam;
      else if (v == "sgd") c.train.optimizer = OptimizerKind::Sgd;
      else throw ConfigError("setting " + k + ": expected adam|sgd, got '" + v + "'");
    };
    t["dtype"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "f32") c.train.use_f64 = false;
      else if (v == "f64") c.train.use_f64 = true;
      else throw ConfigError("setting " + k + ": expected f32|f64, got '" + v + "'");
    };

    int_field("bands", [](RunConfig& c) -> int& { return c.synth.bands; });
    int_field("n_train", [](RunConfig& c) -> int& { return c.synth.n_train; });
    int_field("n_test", [](RunConfig& c) -> int& { return c.synth.n_test; });
    real_field("noise", [](RunConfig& c) -> double& { return c.synth.noise; });

    int_field("P", [](RunConfig& c) -> int& { return c.bench.P; });
    int_field("bench_C", [](RunConfig& c) -> int& { return c.bench.C; });
    int_field("bench_N", [](RunConfig& c) -> int& { return c.bench.N; });
    int_field("chunk", [](RunConfig& c) -> int& { return c.bench.chunk; });
    int_field("reps", [](RunConfig& c) -> int& { return c.bench.reps; });
    int_field("bench_threads", [](RunConfig& c) -> int& { return c.bench.threads; });

    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      const auto* end = v.data() + v.size();
      auto [ptr, ec] = std::from_chars(v.data(), end, c.seed);
      if (ec != std::errc() || ptr != end) throw ConfigError("setting " + k + ": expected an unsigned integer");
    };
    return t;
  }();
  return table;
}

const char* interp_name(InterpMode m) { return m == InterpMode::Bilinear ? "bilinear" : "nearest"; }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (L < 1 || L > 4) fail("L must be in 1..4");
  if (N != 4 && N != 8 && N != 12 && N != 16 && N != 20) fail("N must be one of 4, 8, 12, 16, 20");
  if (Np < 1) fail("Np must be positive");
  if (C < 1) fail("C must be positive");
  if (patch < 1) fail("patch must be positive");
  if (routes != 2 && routes != 4 && routes != 6) fail("routes must be 2, 4 or 6");
  if (down_paths < 0 || down_paths > 4) fail("down_paths must be in 0..4");
  if (down_paths > routes) fail("down_paths cannot exceed routes");
  if (down_paths > 0 && patch < 2) fail("patch must be at least 2 when down_paths > 0");
  if (aux_channels < 1) fail("aux_channels must be positive");
  if (classes < 2) fail("classes must be at least 2");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (lr < 0) fail("lr must be non-negative");
  if (threads < 1) fail("threads must be positive");
  if (save_every < 0) fail("save_every must be non-negative");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("Adam betas must lie in [0, 1)");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

void apply_setting(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object of key/value pairs");
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
    else if (value.is_number_integer() || value.is_number_unsigned()) text = value.dump();
    else if (value.is_number_float()) text = value.dump();
    else throw ConfigError("config key '" + key + "' has an unsupported value type");
    apply_setting(cfg, key, text);
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  apply_config_json(cfg, j);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"L", c.L},
          {"Np", c.Np},
          {"N", c.N},
          {"C", c.C},
          {"patch", c.patch},
          {"routes", c.routes},
          {"down_paths", c.down_paths},
          {"aux_channels", c.aux_channels},
          {"classes", c.classes},
          {"interp", interp_name(c.interp)},
          {"share_route_params", c.share_route_params},
          {"use_spe", c.use_spe},
          {"use_fus", c.use_fus},
          {"a_init", c.a_init == AInit::Fixed ? "fixed" : "random"}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  apply_config_json(rc, j);
  rc.model.validate();
  return rc.model;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = to_json(c.model);
  j["epochs"] = c.train.epochs;
  j["batch_size"] = c.train.batch_size;
  j["lr"] = c.train.lr;
  j["optimizer"] = c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["beta1"] = c.train.beta1;
  j["beta2"] = c.train.beta2;
  j["adam_eps"] = c.train.adam_eps;
  j["save_every"] = c.train.save_every;
  j["threads"] = c.train.threads;
  j["early_stop_oa"] = c.train.early_stop_oa;
  j["dtype"] = c.train.use_f64 ? "f64" : "f32";
  j["bands"] = c.synth.bands;
  j["n_train"] = c.synth.n_train;
  j["n_test"] = c.synth.n_test;
  j["noise"] = c.synth.noise;
  j["P"] = c.bench.P;
  j["bench_C"] = c.bench.C;
  j["bench_N"] = c.bench.N;
  j["chunk"] = c.bench.chunk;
  j["reps"] = c.bench.reps;
  j["bench_threads"] = c.bench.threads;
  j["seed"] = c.seed;
  return j;
}

}  // namespace msf
