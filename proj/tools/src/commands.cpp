#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tmcseg/checkpoint.hpp"
#include "tmcseg/errors.hpp"
#include "tmcseg/inference.hpp"
#include "tmcseg/oracle.hpp"

namespace tmcseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  try {
    return json::parse(f);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

data::LabeledSequence load_archive_checked(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("archive not found: " + path.string());
  return data::load_archive(path);
}

data::HilbertMap map_for(const data::LabeledSequence& seq) {
  const int order = data::order_for_side(seq.provenance.side);
  const data::HilbertMap map(order);
  if (map.size() != seq.length()) throw ConfigError("archive: length does not match its image side");
  return map;
}

std::string labels_string(std::span<const data::Label> labels) {
  std::string s;
  s.reserve(labels.size());
  for (auto l : labels) s += static_cast<char>('0' + l);
  return s;
}

std::vector<data::Label> labels_from_string(const std::string& s) {
  std::vector<data::Label> out;
  for (char c : s) out.push_back(static_cast<data::Label>(c - '0'));
  return out;
}

void log_progress(const std::string& tag, const inference::TraceRow& row, std::size_t epochs) {
  const std::size_t every = std::max<std::size_t>(1, epochs / 10);
  if ((row.epoch + 1) % every != 0 && row.epoch + 1 != epochs) return;
  spdlog::info("{} epoch {}/{} elbo {:.2f}{}", tag, row.epoch + 1, epochs, row.elbo.total,
               row.error_rate ? fmt::format(" er {:.4f}", *row.error_rate) : std::string());
}

data::GrayImage blank_tile(std::size_t side) { return data::GrayImage(side, side, 224); }

/// x, truth, mask, VSL, SVRNN, d-mTMC in a 2 x 3 grid.
data::GrayImage figure_panel(const data::LabeledSequence& seq, const data::HilbertMap& map,
                             const std::map<models::ModelKind, data::BinaryImage>& decoded) {
  std::vector<data::GrayImage> tiles;
  tiles.push_back(eval::render_observations(seq.xs, map));
  tiles.push_back(eval::to_gray(data::sequence_to_image(seq.truth, map)));
  tiles.push_back(eval::render_mask(seq.truth, seq.mask, map));
  for (auto kind : {models::ModelKind::Vsl, models::ModelKind::Svrnn, models::ModelKind::Dmtmc}) {
    const auto it = decoded.find(kind);
    tiles.push_back(it == decoded.end() ? blank_tile(map.side()) : eval::to_gray(it->second));
  }
  return eval::tile_grid(tiles, 3);
}

}  // namespace

// ---------------------------------------------------------------------------

data::BinaryImage build_image(const DataSpec& spec) {
  if (spec.bitmap) {
    if (!fs::exists(*spec.bitmap)) throw ConfigError("bitmap not found: " + spec.bitmap->string());
    return data::load_bitmap(*spec.bitmap);
  }
  return data::generate_shape(spec.shape, spec.side, spec.shape_seed);
}

data::LabeledSequence build_sequence(const DataSpec& spec) {
  const std::string source = spec.bitmap ? "bitmap:" + spec.bitmap->filename().string()
                                         : "shape:" + data::to_string(spec.shape) + ":" +
                                               std::to_string(spec.shape_seed);
  return data::make_sequence(build_image(spec), spec.noise_spec(), spec.fraction_unobserved, spec.mask_seed, source);
}

data::LabeledSequence cmd_gen_data(const RunConfig& cfg, const fs::path& dir) {
  const auto seq = build_sequence(cfg.data);
  const auto map = map_for(seq);
  fs::create_directories(dir / "images");
  data::save_archive(dir / "archive.txt", seq);
  data::save_bitmap(data::sequence_to_image(seq.truth, map), dir / "images" / "truth.pbm");
  data::save_pgm(eval::render_observations(seq.xs, map), dir / "images" / "observations.pgm");
  data::save_pgm(eval::render_mask(seq.truth, seq.mask, map), dir / "images" / "mask.pgm");
  write_text(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  spdlog::info("gen-data: {} steps, {} unobserved, archive {}", seq.length(), seq.unobserved_indices().size(),
               (dir / "archive.txt").string());
  return seq;
}

void cmd_train(const RunConfig& cfg, const fs::path& archive, const fs::path& dir) {
  const auto seq = load_archive_checked(archive);
  const auto kind = cfg.model_kind();
  const auto mcfg = cfg.model_config(kind);
  if (seq.d_x != mcfg.d_x || seq.num_labels != mcfg.num_labels)
    throw ConfigError("train: archive dimensions do not match the model configuration");
  auto model = models::make_model(mcfg, cfg.train.seed);
  spdlog::info("train: {} ({} parameters), {} epochs", models::display_name(kind), model.params.scalar_count(),
               cfg.train.epochs);
  const auto trace = inference::train(model, seq, cfg.train, [&](const inference::TraceRow& row) {
    log_progress(models::display_name(kind), row, cfg.train.epochs);
  });
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.json", model, cfg.train.seed, cfg.train.epochs);
  inference::save_trace_csv(dir / "trace.csv", trace);
  json c = run_config_to_json(cfg);
  c["archive"] = archive.string();
  c["model"] = models::config_to_json(mcfg);
  write_text(dir / "config.json", c.dump(2) + "\n");
}

std::vector<eval::SegmentationResult> cmd_segment(const std::vector<fs::path>& checkpoints, const fs::path& archive,
                                                  const SegmentSpec& spec, const fs::path& dir) {
  if (checkpoints.empty()) throw ConfigError("segment: no checkpoint given");
  if (spec.samples == 0) throw ConfigError("segment: samples must be positive");
  const auto seq = load_archive_checked(archive);
  const auto map = map_for(seq);
  std::vector<eval::SegmentationResult> results;
  std::map<models::ModelKind, data::BinaryImage> images;
  for (const auto& path : checkpoints) {
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    const auto ck = load_checkpoint(path);
    const auto& mc = ck.model.config;
    if (mc.d_x != seq.d_x || mc.num_labels != seq.num_labels)
      throw ConfigError("segment: checkpoint " + path.string() + " does not match the archive dimensions");
    const auto start = std::chrono::steady_clock::now();
    const auto post = inference::posterior_labels(ck.model, seq, spec.samples, spec.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto r = eval::make_result(seq, post, mc.kind, {ck.seed, ck.step, seconds});
    const std::string name = models::to_string(mc.kind);

    std::ostringstream csv;
    csv << "t,row,col,mask,truth,decoded,p_omega2\n";
    for (std::size_t t = 0; t < seq.length(); ++t) {
      const auto cell = map.cell(t);
      csv << t << ',' << cell.row << ',' << cell.col << ',' << (seq.observed(t) ? 'L' : 'U') << ','
          << int(seq.truth[t]) << ',' << int(post.decoded[t]) << ',' << fmt::format("{:.6f}", post.probs[t][1])
          << '\n';
    }
    write_text(dir / "results" / (name + ".csv"), csv.str());
    const auto U = seq.unobserved_indices();
    json summary = {{"model", models::display_name(mc.kind)},
                    {"checkpoint", path.string()},
                    {"samples", spec.samples},
                    {"seed", spec.seed},
                    {"unobserved", U.size()},
                    {"error_rate", U.empty() ? json(nullptr) : json(eval::error_rate(r))},
                    {"seconds", seconds}};
    write_text(dir / "results" / (name + ".json"), summary.dump(2) + "\n");
    images[mc.kind] = eval::render_segmentation(r, map);
    data::save_bitmap(images[mc.kind], dir / "images" / (name + ".pbm"));
    if (!U.empty()) spdlog::info("segment: {} error rate {:.2f}%", models::display_name(mc.kind), 100.0 * eval::error_rate(r));
    results.push_back(std::move(r));
  }
  data::save_pgm(figure_panel(seq, map, images), dir / "images" / "panel.pgm");
  return results;
}

// ---------------------------------------------------------------------------
// repro-table

namespace {

CellResult run_cell(const RunConfig& cfg, const Scenario& sc, const data::LabeledSequence& seq,
                    models::ModelKind kind, std::uint64_t seed, const fs::path& cell_dir) {
  CellResult r{sc.label, sc.id, kind, seed, std::nullopt, 0.0, 0.0, {}, {}};
  const fs::path results = cell_dir / "results.json";
  if (const auto prev = read_json(results); prev && prev->value("complete", false)) {
    r.error_rate = (*prev)["error_rate"].get<double>();
    r.final_elbo = (*prev)["final_elbo"].get<double>();
    r.seconds = (*prev)["seconds"].get<double>();
    r.decoded = labels_from_string((*prev)["decoded"].get<std::string>());
    spdlog::info("{} / {} / seed {}: cached, error rate {:.2f}%", sc.label, models::display_name(kind), seed,
                 100.0 * *r.error_rate);
    return r;
  }
  const auto start = std::chrono::steady_clock::now();
  auto model = models::make_model(cfg.model_config(kind), seed);
  auto tc = cfg.train;
  tc.seed = seed;
  const std::string tag = fmt::format("{} / {} / seed {}", sc.label, models::display_name(kind), seed);
  const auto trace =
      inference::train(model, seq, tc, [&](const inference::TraceRow& row) { log_progress(tag, row, tc.epochs); });
  const auto post = inference::posterior_labels(model, seq, cfg.segment.samples, cfg.segment.seed);
  const auto result = eval::make_result(seq, post, kind, {seed, tc.epochs, 0.0});
  r.error_rate = eval::error_rate(result);
  r.final_elbo = trace.rows.empty() ? 0.0 : trace.rows.back().elbo.total;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.decoded = result.decoded;

  fs::create_directories(cell_dir);
  save_checkpoint(cell_dir / "checkpoint.json", model, seed, tc.epochs);
  inference::save_trace_csv(cell_dir / "trace.csv", trace);
  json j = {{"scenario", sc.id},   {"label", sc.label},       {"model", models::display_name(kind)},
            {"seed", seed},        {"error_rate", *r.error_rate}, {"final_elbo", r.final_elbo},
            {"epochs", tc.epochs}, {"seconds", r.seconds},    {"decoded", labels_string(r.decoded)},
            {"complete", true}};
  write_text(results, j.dump(2) + "\n");
  spdlog::info("{}: error rate {:.2f}% in {:.0f} s", tag, 100.0 * *r.error_rate, r.seconds);
  return r;
}

}  // namespace

ReproReport cmd_repro_table(const RunConfig& cfg, const fs::path& dir, std::size_t jobs) {
  fs::create_directories(dir / "images");
  write_text(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");

  std::vector<data::LabeledSequence> seqs;
  for (const auto& sc : cfg.repro.scenarios) {
    auto seq = build_sequence(sc.data);
    data::save_archive(dir / sc.id / "archive.txt", seq);
    seqs.push_back(std::move(seq));
  }

  struct Job {
    std::size_t scenario;
    models::ModelKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (std::size_t s = 0; s < cfg.repro.scenarios.size(); ++s)
    for (auto kind : cfg.repro.models)
      for (auto seed : cfg.repro.seeds) work.push_back({s, kind, seed});

  ReproReport report;
  report.cells.resize(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < work.size();) {
      const auto& w = work[i];
      const auto& sc = cfg.repro.scenarios[w.scenario];
      const fs::path cell_dir = dir / sc.id / fmt::format("{}-seed{}", models::to_string(w.kind), w.seed);
      try {
        report.cells[i] = run_cell(cfg, sc, seqs[w.scenario], w.kind, w.seed, cell_dir);
      } catch (const std::exception& e) {
        spdlog::error("{} / {} / seed {} failed: {}", sc.label, models::display_name(w.kind), w.seed, e.what());
        report.cells[i] = CellResult{sc.label, sc.id, w.kind, w.seed, std::nullopt, 0.0, 0.0, {}, e.what()};
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, work.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream per_seed;
  per_seed << "scenario,model,seed,error_rate_percent,final_elbo,seconds,error\n";
  std::map<std::pair<std::string, models::ModelKind>, const CellResult*> best;
  for (const auto& c : report.cells) {
    per_seed << '"' << c.label << "\"," << models::display_name(c.kind) << ',' << c.seed << ','
             << (c.error_rate ? fmt::format("{:.4f}", 100.0 * *c.error_rate) : "") << ','
             << fmt::format("{:.3f}", c.final_elbo) << ',' << fmt::format("{:.1f}", c.seconds) << ",\""
             << c.error << "\"\n";
    if (!c.error_rate) {
      report.complete = false;
      continue;
    }
    auto& b = best[{c.label, c.kind}];
    if (!b || *c.error_rate < *b->error_rate) b = &c;
  }
  for (const auto& [key, c] : best) report.best.push_back({key.first, key.second, *c->error_rate});
  write_text(dir / "per_seed.csv", per_seed.str());
  write_text(dir / "table.csv", eval::table_csv(report.best));
  const std::string text = eval::table_text(report.best);
  write_text(dir / "table.txt", text);

  for (std::size_t s = 0; s < cfg.repro.scenarios.size(); ++s) {
    const auto& sc = cfg.repro.scenarios[s];
    const auto map = map_for(seqs[s]);
    std::map<models::ModelKind, data::BinaryImage> images;
    for (auto kind : cfg.repro.models) {
      const auto it = best.find({sc.label, kind});
      if (it == best.end()) continue;
      eval::SegmentationResult r{kind, seqs[s].truth, seqs[s].mask, it->second->decoded, {}};
      images[kind] = eval::render_segmentation(r, map);
    }
    data::save_pgm(figure_panel(seqs[s], map, images), dir / "images" / (sc.id + "-panel.pgm"));
  }
  spdlog::info("repro-table:\n{}", text);
  return report;
}

double cmd_oracle(const fs::path& archive, const fs::path& dir) {
  const auto seq = load_archive_checked(archive);
  const auto hmm = oracle::estimate_hmm(seq);
  const auto smooth = oracle::forward_backward(hmm, seq);
  const auto decoded = oracle::map_decode(smooth);
  const auto U = seq.unobserved_indices();
  std::size_t wrong = 0;
  for (std::size_t t : U) wrong += decoded[t] != seq.truth[t];
  const double er = U.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(U.size());
  json j = {{"initial", hmm.initial},     {"transition", hmm.transition}, {"mean", hmm.mean},
            {"stddev", hmm.stddev},       {"log_evidence", smooth.log_evidence},
            {"unobserved", U.size()},     {"error_rate", U.empty() ? json(nullptr) : json(er)}};
  write_text(dir / "results" / "oracle.json", j.dump(2) + "\n");
  spdlog::info("oracle: log p(x, y^L) = {:.4f}, HMM forward-backward error rate {:.2f}%", smooth.log_evidence,
               100.0 * er);
  return er;
}

// ---------------------------------------------------------------------------
// Entry point

namespace {

void configure_logging() {
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("TMCSEG_LOG_LEVEL")) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed override");
  sub->add_option("--out", c.out, "Output root; results go to <out>/<name>");
  sub->add_option("--jobs", c.jobs, "Parallel workers (repro-table)")->check(CLI::PositiveNumber);
}

RunConfig load_or_default(const Common& c) {
  if (c.config.empty()) return run_config_from_json(json::object());
  return load_run_config(c.config);
}

}  // namespace

int run(int argc, const char* const* argv) {
  configure_logging();
  CLI::App app{"Triplet Markov chain models for semi-supervised binary image segmentation"};
  app.require_subcommand(1);
  Common common;
  std::string archive, kind;
  std::vector<std::string> checkpoints;
  std::optional<std::size_t> epochs, samples;

  auto* gen = app.add_subcommand("gen-data", "Generate a corrupted, partially labeled sequence archive");
  add_common(gen, common);
  auto* train = app.add_subcommand("train", "Train a model on an archive");
  add_common(train, common);
  train->add_option("--archive", archive, "Sequence archive (default <out>/<name>/archive.txt)");
  train->add_option("--model", kind, "Model kind: dmtmc, svrnn or vsl");
  train->add_option("--epochs", epochs, "Epoch override");
  auto* seg = app.add_subcommand("segment", "Decode the unobserved labels of an archive");
  add_common(seg, common);
  seg->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")->required();
  seg->add_option("--archive", archive, "Sequence archive")->required();
  seg->add_option("--samples", samples, "Monte-Carlo samples");
  auto* repro = app.add_subcommand("repro-table", "Train and score every scenario, model and seed");
  add_common(repro, common);
  auto* orc = app.add_subcommand("oracle", "Exact HMM forward-backward baseline on an archive");
  add_common(orc, common);
  orc->add_option("--archive", archive, "Sequence archive")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = load_or_default(common);
    const fs::path dir = fs::path(common.out) / cfg.name;
    if (gen->parsed()) {
      if (common.seed) {
        cfg.data.seed = *common.seed;
        cfg.data.mask_seed = *common.seed + 1;
      }
      cmd_gen_data(cfg, dir);
    } else if (train->parsed()) {
      if (common.seed) cfg.train.seed = *common.seed;
      if (epochs) cfg.train.epochs = *epochs;
      if (!kind.empty()) {
        cfg.model["kind"] = models::to_string(models::model_kind_from_string(kind));
        cfg.model_config(cfg.model_kind());
      }
      const fs::path arch = !archive.empty() ? fs::path(archive) : cfg.archive ? *cfg.archive : dir / "archive.txt";
      cmd_train(cfg, arch, dir);
    } else if (seg->parsed()) {
      if (common.seed) cfg.segment.seed = *common.seed;
      if (samples) cfg.segment.samples = *samples;
      std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
      cmd_segment(paths, archive, cfg.segment, dir);
    } else if (repro->parsed()) {
      if (common.seed) {
        const std::size_t n = cfg.repro.seeds.size();
        cfg.repro.seeds.clear();
        for (std::size_t i = 0; i < n; ++i) cfg.repro.seeds.push_back(*common.seed + i);
      }
      if (!cmd_repro_table(cfg, dir, common.jobs).complete) return kExitRuntime;
    } else if (orc->parsed()) {
      cmd_oracle(archive, dir);
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const ContractError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const json::exception& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tmcseg::cli
