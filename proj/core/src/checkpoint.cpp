#include "tmcseg/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tmcseg/errors.hpp"

namespace tmcseg {

namespace {
constexpr const char* kFormat = "tmcseg-checkpoint";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json checkpoint_to_json(const models::TmcModel& model, std::uint64_t seed, std::uint64_t step) {
  return {{"format", kFormat},
          {"version", kVersion},
          {"config", models::config_to_json(model.config)},
          {"seed", seed},
          {"step", step},
          {"params", nn::params_to_json(model.params)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != kFormat) throw ContractError("checkpoint: not a tmcseg checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw ContractError("checkpoint: unsupported version " + j.at("version").dump());
    Checkpoint c;
    c.model = models::make_model(models::config_from_json(j.at("config")), 0);
    nn::params_from_json(j.at("params"), c.model.params);
    c.seed = j.at("seed").get<std::uint64_t>();
    c.step = j.at("step").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const models::TmcModel& model, std::uint64_t seed,
                     std::uint64_t step) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << checkpoint_to_json(model, seed, step).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), e.byte);
  }
  return checkpoint_from_json(j);
}

}  // namespace tmcseg
