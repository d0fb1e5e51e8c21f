#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "tmcseg/errors.hpp"

namespace tmcseg::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

data::NoiseSpec DataSpec::noise_spec() const {
  auto spec = noise == data::NoiseKind::CattleSin ? data::NoiseSpec::cattle_preset(seed)
                                                   : data::NoiseSpec::camel_preset(seed);
  if (a) spec.a = *a;
  if (scale) spec.scale = *scale;
  spec.validate();
  return spec;
}

DataSpec data_spec_from_json(const json& j) {
  reject_unknown(j, {"shape", "side", "shape_seed", "bitmap", "noise", "a", "scale", "seed", "fraction_unobserved",
                     "mask_seed"},
                 "data");
  DataSpec d;
  if (j.contains("shape")) d.shape = data::shape_kind_from_string(j.at("shape").get<std::string>());
  read(j, "side", d.side);
  read(j, "shape_seed", d.shape_seed);
  if (j.contains("bitmap") && !j.at("bitmap").is_null()) d.bitmap = j.at("bitmap").get<std::string>();
  if (j.contains("noise")) {
    const auto n = j.at("noise").get<std::string>();
    if (n == "cattle")
      d.noise = data::NoiseKind::CattleSin;
    else if (n == "camel")
      d.noise = data::NoiseKind::CamelMult;
    else
      d.noise = data::noise_kind_from_string(n);
  }
  if (j.contains("a")) d.a = j.at("a").get<std::vector<double>>();
  if (j.contains("scale")) d.scale = j.at("scale").get<std::vector<double>>();
  read(j, "seed", d.seed);
  read(j, "fraction_unobserved", d.fraction_unobserved);
  read(j, "mask_seed", d.mask_seed);
  if (d.fraction_unobserved < 0.0 || d.fraction_unobserved > 1.0)
    throw ConfigError("data: fraction_unobserved must lie in [0, 1]");
  d.noise_spec();
  return d;
}

json data_spec_to_json(const DataSpec& d) {
  json j = {{"shape", data::to_string(d.shape)},
            {"side", d.side},
            {"shape_seed", d.shape_seed},
            {"bitmap", d.bitmap ? json(d.bitmap->string()) : json(nullptr)},
            {"noise", data::to_string(d.noise)},
            {"seed", d.seed},
            {"fraction_unobserved", d.fraction_unobserved},
            {"mask_seed", d.mask_seed}};
  const auto spec = d.noise_spec();
  j["a"] = spec.a;
  j["scale"] = spec.scale;
  return j;
}

std::vector<Scenario> default_scenarios() {
  DataSpec cattle;
  cattle.shape = data::ShapeKind::Blob;
  cattle.noise = data::NoiseKind::CattleSin;
  cattle.fraction_unobserved = 0.4;
  DataSpec camel;
  camel.shape = data::ShapeKind::Polygon;
  camel.noise = data::NoiseKind::CamelMult;
  camel.fraction_unobserved = 0.4;
  DataSpec camel60 = camel;
  camel60.fraction_unobserved = 0.6;
  return {{"Cattle 40%", "cattle40", cattle}, {"Camel 40%", "camel40", camel}, {"Camel 60%", "camel60", camel60}};
}

inference::TrainConfig default_train_config() {
  inference::TrainConfig t;
  t.epochs = 300;
  t.learning_rate = 3e-3;
  return t;
}

models::ModelKind RunConfig::model_kind() const {
  if (model.contains("kind")) return models::model_kind_from_string(model.at("kind").get<std::string>());
  return models::ModelKind::Dmtmc;
}

models::TmcConfig RunConfig::model_config(models::ModelKind kind) const {
  json j = models::config_to_json(models::TmcConfig::preset(kind));
  if (model.contains("kind") && models::model_kind_from_string(model.at("kind").get<std::string>()) != kind)
    throw ConfigError("model: section is for kind '" + model.at("kind").get<std::string>() + "'");
  for (const auto& [key, value] : model.items()) {
    if (key == "temperature" && value.is_object())
      for (const auto& [tk, tv] : value.items()) j["temperature"][tk] = tv;
    else
      j[key] = value;
  }
  j["kind"] = models::to_string(kind);
  return models::config_from_json(j);
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"name", "data", "archive", "model", "train", "segment", "repro"}, "config");
  RunConfig c;
  c.train = default_train_config();
  read(j, "name", c.name);
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("config: invalid run name");
  if (j.contains("data")) c.data = data_spec_from_json(j.at("data"));
  if (j.contains("archive") && !j.at("archive").is_null()) c.archive = j.at("archive").get<std::string>();
  if (j.contains("model")) {
    c.model = j.at("model");
    if (!c.model.is_object()) throw ConfigError("model must be an object");
    c.model_config(c.model_kind());
  }
  if (j.contains("train")) {
    json t = inference::train_config_to_json(c.train);
    reject_unknown(j.at("train"), [&] {
      std::set<std::string> keys;
      for (const auto& [k, _] : t.items()) keys.insert(k);
      return keys;
    }(), "train");
    for (const auto& [k, v] : j.at("train").items()) t[k] = v;
    c.train = inference::train_config_from_json(t);
  }
  if (j.contains("segment")) {
    const auto& s = j.at("segment");
    reject_unknown(s, {"samples", "seed"}, "segment");
    read(s, "samples", c.segment.samples);
    read(s, "seed", c.segment.seed);
    if (c.segment.samples == 0) throw ConfigError("segment: samples must be positive");
  }
  c.repro.scenarios = default_scenarios();
  c.repro.models = {models::ModelKind::Vsl, models::ModelKind::Svrnn, models::ModelKind::Dmtmc};
  c.repro.seeds = {1, 2, 3};
  if (j.contains("repro")) {
    const auto& r = j.at("repro");
    reject_unknown(r, {"scenarios", "models", "seeds"}, "repro");
    if (r.contains("scenarios")) {
      c.repro.scenarios.clear();
      for (const auto& s : r.at("scenarios")) {
        reject_unknown(s, {"label", "id", "data"}, "repro.scenarios[]");
        Scenario sc{s.at("label").get<std::string>(), s.at("id").get<std::string>(), {}};
        if (sc.id.empty() || sc.id.find('/') != std::string::npos) throw ConfigError("repro: invalid scenario id");
        if (s.contains("data")) sc.data = data_spec_from_json(s.at("data"));
        c.repro.scenarios.push_back(std::move(sc));
      }
    }
    if (r.contains("models")) {
      c.repro.models.clear();
      for (const auto& m : r.at("models")) c.repro.models.push_back(models::model_kind_from_string(m.get<std::string>()));
    }
    if (r.contains("seeds")) c.repro.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.repro.scenarios.empty() || c.repro.models.empty() || c.repro.seeds.empty())
      throw ConfigError("repro: scenarios, models and seeds must be non-empty");
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json scenarios = json::array();
  for (const auto& s : c.repro.scenarios)
    scenarios.push_back({{"label", s.label}, {"id", s.id}, {"data", data_spec_to_json(s.data)}});
  json kinds = json::array();
  for (auto k : c.repro.models) kinds.push_back(models::to_string(k));
  return {{"name", c.name},
          {"data", data_spec_to_json(c.data)},
          {"archive", c.archive ? json(c.archive->string()) : json(nullptr)},
          {"model", c.model},
          {"train", inference::train_config_to_json(c.train)},
          {"segment", {{"samples", c.segment.samples}, {"seed", c.segment.seed}}},
          {"repro", {{"scenarios", scenarios}, {"models", kinds}, {"seeds", c.repro.seeds}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  try {
    return run_config_from_json(json::parse(buf.str()));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace tmcseg::cli
