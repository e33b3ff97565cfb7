// SPDX-License-Identifier: Apache-2.0
//
// uct — desk-scale ultrasound-CT pipeline driver.
//
// usage: uct <subcommand> [--config FILE] [--key value ...]
// Precedence: command-line flag > config file > built-in default.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ucts/checkpoint.hpp"
#include "ucts/das.hpp"
#include "ucts/fwi.hpp"
#include "ucts/metrics.hpp"
#include "ucts/phantom.hpp"
#include "ucts/png.hpp"
#include "ucts/runconfig.hpp"
#include "ucts/train.hpp"

namespace fs = std::filesystem;
using namespace ucts;

namespace {

using KV = std::vector<std::pair<std::string, std::string>>;

/// Parse `--key value` pairs after the subcommand; `--config FILE` is the
/// config-file layer, everything else is a flag override.
RunConfig parse_args(KV defaults, int argc, char** argv, int first) {
  defaults.emplace_back("config", "");
  RunConfig cfg(std::move(defaults));
  KV flags;
  std::string config_path;
  for (int i = first; i < argc; ++i) {
    std::string key = argv[i];
    if (key.rfind("--", 0) != 0)
      throw ConfigError("expected --key, got '" + key + "'");
    key = key.substr(2);
    if (i + 1 >= argc)
      throw ConfigError("flag --" + key + " is missing its value");
    const std::string value = argv[++i];
    if (key == "config")
      config_path = value;
    else
      flags.emplace_back(key, value);
  }
  if (!config_path.empty()) cfg.load_file(config_path);
  for (auto& [k, v] : flags) cfg.set_flag(k, v);
  return cfg;
}

// ---- shared key blocks -----------------------------------------------------

KV grid_keys() {
  return {{"nx", "64"}, {"nz", "64"}, {"dx", "0.001"}};
}
KV acquisition_keys() {
  return {{"fs", "2e6"},          {"nt_out", "128"},
          {"f0", "150e3"},        {"n_elem", "16"},
          {"ring_diameter", "0.048"}, {"sponge_cells", "3"}};
}
KV model_keys() {
  return {{"head_channels", "32"},  {"level_channels", "32,64,128"},
          {"attn_heads", "2"},      {"use_channel_attention", "1"},
          {"use_attention_gates", "1"}, {"use_self_attention", "1"}};
}

Grid2D grid_from(const RunConfig& c) {
  return Grid2D(int(c.get_int("nx")), int(c.get_int("nz")),
                c.get_double("dx"));
}

AcquisitionConfig acq_from(const RunConfig& c) {
  AcquisitionConfig a;
  a.fs = c.get_double("fs");
  a.nt_out = int(c.get_int("nt_out"));
  a.f0 = c.get_double("f0");
  a.n_tx = a.n_rx = int(c.get_int("n_elem"));
  a.sponge_cells = int(c.get_int("sponge_cells"));
  a.validate();
  return a;
}

PhysicsContext physics_from(const RunConfig& c, const Grid2D& grid,
                            const AcquisitionConfig& acq) {
  PhysicsContext phys;
  phys.grid = grid;
  phys.cfg = acq;
  phys.array = make_ring_array(acq.n_tx, c.get_double("ring_diameter"), grid,
                               acq.sponge_cells);
  phys.wavelet = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);
  return phys;
}

AttUctConfig model_from(const RunConfig& c, int nt, int n_elem, int nx,
                        int nz) {
  AttUctConfig m;
  m.nt = nt;
  m.n_tx = m.n_rx = n_elem;
  m.nx = nx;
  m.nz = nz;
  m.head_channels = int(c.get_int("head_channels"));
  std::vector<long long> lv = c.get_list<long long>("level_channels");
  m.level_channels.assign(lv.begin(), lv.end());
  m.attn_heads = int(c.get_int("attn_heads"));
  m.use_channel_attention = c.get_bool("use_channel_attention");
  m.use_attention_gates = c.get_bool("use_attention_gates");
  m.use_self_attention = c.get_bool("use_self_attention");
  m.validate();
  return m;
}

/// Sorted *.rfc files in a directory.
std::vector<fs::path> list_rfc(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw IoError("dataset directory does not exist: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".rfc") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .rfc files in directory: " + dir);
  return files;
}

TrainConfig train_config_from(const RunConfig& c, TrainConfig base) {
  base.epochs = int(c.get_int("epochs"));
  base.batch = int(c.get_int("batch"));
  base.lr0 = c.get_double("lr0");
  base.seed = c.get_uint64("seed");
  base.weight_decay = c.get_double("weight_decay");
  base.validate();
  return base;
}

KV train_keys(const TrainConfig& d) {
  return {{"epochs", std::to_string(d.epochs)},
          {"batch", std::to_string(d.batch)},
          {"lr0", std::to_string(d.lr0)},
          {"seed", "0"},
          {"weight_decay", "0"},
          {"log", ""}};
}

void maybe_write_log(const RunConfig& c, const EpochLog& log) {
  if (!c.is_set("log")) return;
  std::ofstream os(c.get("log"));
  if (!os) throw IoError("cannot open for writing: " + c.get("log"));
  log.write_csv(os);
}

Checkpoint make_checkpoint(const AttUctConfig& model, const ParamSet& params,
                           const std::string& stage) {
  Checkpoint ckpt;
  ckpt.params = clone_params(params);
  put_model_metadata(ckpt, model);
  ckpt.metadata["rf_norm"] = kRfNormScheme;
  ckpt.metadata["stage"] = stage;
  return ckpt;
}

SosMap infer_map(const AttUctConfig& model, const ParamSet& params,
                 const RfCube& cube, const Grid2D& grid,
                 const LoraAdapter* adapter) {
  ad::Tensor<float> rf = rf_to_tensor<float>(cube);
  ad::Tensor<float> pred = attuct_forward(model, params, rf, adapter);
  SosMap map(grid, 1500.0);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = double(pred.value()[i]);
  return map;
}

// ---- subcommands -----------------------------------------------------------

int cmd_phantom(int argc, char** argv) {
  KV keys = grid_keys();
  keys.insert(keys.end(), {{"seed", "0"}, {"preset", "forearm"}, {"out", ""}});
  RunConfig c = parse_args(keys, argc, argv, 2);
  PhantomSpec spec;
  spec.seed = c.get_uint64("seed");
  spec.preset = c.get("preset");
  SosMap map = generate_phantom(spec, grid_from(c));
  save_sos(map, c.get("out"));
  return 0;
}

int cmd_simulate(int argc, char** argv) {
  KV keys = acquisition_keys();
  keys.insert(keys.end(), {{"map", ""}, {"out", ""}});
  RunConfig c = parse_args(keys, argc, argv, 2);
  SosMap map = load_sos(c.get("map"));
  AcquisitionConfig acq = acq_from(c);
  RingArray array = make_ring_array(acq.n_tx, c.get_double("ring_diameter"),
                                    map.grid, acq.sponge_cells);
  Wavelet w = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);
  RfCube cube = forward_full_matrix(map, array, w, acq);
  save_rfc(cube, c.get("out"));
  return 0;
}

int cmd_das(int argc, char** argv) {
  KV keys = grid_keys();
  keys.insert(keys.end(), {{"rfc", ""},
                           {"ref", ""},
                           {"c0", "1500"},
                           {"ring_diameter", "0.048"},
                           {"out", ""}});
  RunConfig c = parse_args(keys, argc, argv, 2);
  RfCube cube = load_rfc(c.get("rfc"));
  if (c.is_set("ref"))
    cube = subtract_reference(cube, load_rfc(c.get("ref")));
  Grid2D grid = grid_from(c);
  RingArray array =
      make_ring_array(cube.n_tx, c.get_double("ring_diameter"), grid);
  DasImage img = das_reconstruct(cube, array, c.get_double("c0"), grid);
  save_sos(SosMap(grid, img.values), c.get("out"));
  return 0;
}

int cmd_fwi(int argc, char** argv) {
  KV keys = grid_keys();
  keys.insert(keys.end(), {{"rfc", ""},
                           {"out", ""},
                           {"ring_diameter", "0.048"},
                           {"sponge_cells", "3"},
                           {"iters", "50"},
                           {"memory", "5"},
                           {"c_min", "1300"},
                           {"c_max", "3100"},
                           {"init_speed", "1500"},
                           {"trace", ""}});
  RunConfig c = parse_args(keys, argc, argv, 2);
  RfCube cube = load_rfc(c.get("rfc"));
  Grid2D grid = grid_from(c);
  AcquisitionConfig acq;
  acq.fs = 1.0 / cube.dt_out;
  acq.nt_out = cube.nt;
  acq.f0 = cube.f0;
  acq.n_tx = acq.n_rx = cube.n_tx;
  acq.sponge_cells = int(c.get_int("sponge_cells"));
  acq.validate();
  RingArray array = make_ring_array(cube.n_tx, c.get_double("ring_diameter"),
                                    grid, acq.sponge_cells);
  Wavelet w = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);
  FwiConfig fwi;
  fwi.max_iters = int(c.get_int("iters"));
  fwi.lbfgs_memory = int(c.get_int("memory"));
  fwi.c_min = c.get_double("c_min");
  fwi.c_max = c.get_double("c_max");
  fwi.init_speed = c.get_double("init_speed");
  auto [map, trace] = fwi_reconstruct(cube, array, w, acq, fwi, grid);
  save_sos(map, c.get("out"));
  if (c.is_set("trace")) {
    std::ofstream os(c.get("trace"));
    if (!os) throw IoError("cannot open for writing: " + c.get("trace"));
    trace.write_csv(os);
  }
  return 0;
}

int cmd_train_stage1(int argc, char** argv) {
  KV keys = model_keys();
  KV tk = train_keys(TrainConfig::stage1_defaults());
  keys.insert(keys.end(), tk.begin(), tk.end());
  keys.insert(keys.end(),
              {{"dataset", ""}, {"out", ""}, {"val_fraction", "0.2"}});
  RunConfig c = parse_args(keys, argc, argv, 2);

  std::vector<TrainSample> data;
  for (const fs::path& p : list_rfc(c.get("dataset"))) {
    fs::path sos = p;
    sos.replace_extension(".sos");
    if (!fs::exists(sos))
      throw IoError("missing ground-truth map for " + p.string());
    data.push_back({load_rfc(p.string()), load_sos(sos.string())});
  }
  const RfCube& first = data.front().rf;
  const Grid2D& grid = data.front().map.grid;
  AttUctConfig model = model_from(c, first.nt, first.n_tx, grid.nx, grid.nz);
  TrainConfig cfg = train_config_from(c, TrainConfig::stage1_defaults());
  cfg.val_fraction = c.get_double("val_fraction");
  ParamSet params = build_attuct(model, cfg.seed);
  auto [best, log] = train_stage1(model, params, data, cfg);
  save_checkpoint(c.get("out"), make_checkpoint(model, best, "supervised"));
  maybe_write_log(c, log);
  return 0;
}

int cmd_finetune_stage2(int argc, char** argv) {
  KV keys = {{"ckpt", ""}, {"dataset", ""}, {"out", ""},
             {"dx", "0.001"}, {"ring_diameter", "0.048"},
             {"sponge_cells", "3"}};
  KV tk = train_keys(TrainConfig::stage2_defaults());
  keys.insert(keys.end(), tk.begin(), tk.end());
  RunConfig c = parse_args(keys, argc, argv, 2);

  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  std::vector<RfCube> cubes;
  for (const fs::path& p : list_rfc(c.get("dataset")))
    cubes.push_back(load_rfc(p.string()));
  Grid2D grid(model.nx, model.nz, c.get_double("dx"));
  AcquisitionConfig acq;
  acq.fs = 1.0 / cubes.front().dt_out;
  acq.nt_out = cubes.front().nt;
  acq.f0 = cubes.front().f0;
  acq.n_tx = acq.n_rx = cubes.front().n_tx;
  acq.sponge_cells = int(c.get_int("sponge_cells"));
  acq.validate();
  PhysicsContext phys;
  phys.grid = grid;
  phys.cfg = acq;
  phys.array = make_ring_array(acq.n_tx, c.get_double("ring_diameter"), grid,
                               acq.sponge_cells);
  phys.wavelet = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);

  TrainConfig cfg = train_config_from(c, TrainConfig::stage2_defaults());
  EpochLog log = train_stage2(model, ckpt.params, cubes, phys, cfg);
  save_checkpoint(c.get("out"),
                  make_checkpoint(model, ckpt.params, "self_supervised"));
  maybe_write_log(c, log);
  return 0;
}

int cmd_finetune_lora(int argc, char** argv) {
  KV keys = {{"ckpt", ""},     {"dataset", ""},      {"out", ""},
             {"dx", "0.001"},  {"ring_diameter", "0.048"},
             {"sponge_cells", "3"}, {"rank", "16"},  {"alpha", "16"},
             {"targets", ""}};
  KV tk = train_keys(TrainConfig::lora_defaults());
  keys.insert(keys.end(), tk.begin(), tk.end());
  RunConfig c = parse_args(keys, argc, argv, 2);

  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  std::vector<RfCube> cubes;
  for (const fs::path& p : list_rfc(c.get("dataset")))
    cubes.push_back(load_rfc(p.string()));
  Grid2D grid(model.nx, model.nz, c.get_double("dx"));
  AcquisitionConfig acq;
  acq.fs = 1.0 / cubes.front().dt_out;
  acq.nt_out = cubes.front().nt;
  acq.f0 = cubes.front().f0;
  acq.n_tx = acq.n_rx = cubes.front().n_tx;
  acq.sponge_cells = int(c.get_int("sponge_cells"));
  acq.validate();
  PhysicsContext phys;
  phys.grid = grid;
  phys.cfg = acq;
  phys.array = make_ring_array(acq.n_tx, c.get_double("ring_diameter"), grid,
                               acq.sponge_cells);
  phys.wavelet = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);

  std::vector<std::string> targets;
  if (c.is_set("targets")) {
    std::istringstream is(c.get("targets"));
    std::string t;
    while (std::getline(is, t, ',')) targets.push_back(t);
  }
  LoraAdapter adapter =
      build_lora(model, ckpt.params, targets, int(c.get_int("rank")),
                 c.get_double("alpha"), c.get_uint64("seed"));
  TrainConfig cfg = train_config_from(c, TrainConfig::lora_defaults());
  EpochLog log = train_lora(model, ckpt.params, adapter, cubes, phys, cfg);
  save_lora(c.get("out"), adapter);
  maybe_write_log(c, log);
  return 0;
}

int cmd_infer(int argc, char** argv) {
  RunConfig c = parse_args(
      {{"ckpt", ""}, {"rfc", ""}, {"out", ""}, {"lora", ""}, {"dx", "0.001"}},
      argc, argv, 2);
  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  RfCube cube = load_rfc(c.get("rfc"));
  Grid2D grid(model.nx, model.nz, c.get_double("dx"));
  LoraAdapter adapter;
  const LoraAdapter* ap = nullptr;
  if (c.is_set("lora")) {
    adapter = load_lora(c.get("lora"));
    ap = &adapter;
  }
  save_sos(infer_map(model, ckpt.params, cube, grid, ap), c.get("out"));
  return 0;
}

int cmd_eval(int argc, char** argv) {
  RunConfig c =
      parse_args({{"pred", ""}, {"ref", ""}, {"range", "-1"}}, argc, argv, 2);
  SosMap pred = load_sos(c.get("pred"));
  SosMap ref = load_sos(c.get("ref"));
  const double range = c.get_double("range");
  std::printf("{\"psnr_db\": %.10g, \"ssim\": %.10g}\n",
              psnr(pred, ref, range), ssim(pred, ref, range));
  return 0;
}

int cmd_lr_sweep(int argc, char** argv) {
  KV keys = {{"ckpt", ""},    {"dataset", ""},      {"out", ""},
             {"dx", "0.001"}, {"ring_diameter", "0.048"},
             {"sponge_cells", "3"}, {"lrs", "1e-2,1e-3,1e-4,1e-5,1e-6,1e-7"}};
  KV tk = train_keys(TrainConfig::stage2_defaults());
  keys.insert(keys.end(), tk.begin(), tk.end());
  RunConfig c = parse_args(keys, argc, argv, 2);

  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  std::vector<RfCube> cubes;
  for (const fs::path& p : list_rfc(c.get("dataset")))
    cubes.push_back(load_rfc(p.string()));
  Grid2D grid(model.nx, model.nz, c.get_double("dx"));
  AcquisitionConfig acq;
  acq.fs = 1.0 / cubes.front().dt_out;
  acq.nt_out = cubes.front().nt;
  acq.f0 = cubes.front().f0;
  acq.n_tx = acq.n_rx = cubes.front().n_tx;
  acq.sponge_cells = int(c.get_int("sponge_cells"));
  acq.validate();
  PhysicsContext phys;
  phys.grid = grid;
  phys.cfg = acq;
  phys.array = make_ring_array(acq.n_tx, c.get_double("ring_diameter"), grid,
                               acq.sponge_cells);
  phys.wavelet = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);

  TrainConfig cfg = train_config_from(c, TrainConfig::stage2_defaults());
  auto rows = lr_sweep(model, ckpt.params, cubes, phys, cfg,
                       c.get_list<double>("lrs"));
  std::ofstream os(c.get("out"));
  if (!os) throw IoError("cannot open for writing: " + c.get("out"));
  write_lr_sweep_csv(os, rows);
  return 0;
}

int cmd_render(int argc, char** argv) {
  RunConfig c = parse_args({{"map", ""},
                            {"out", ""},
                            {"lo", "1400"},
                            {"hi", "2900"},
                            {"colormap", "grayscale"},
                            {"scale", "1"}},
                           argc, argv, 2);
  SosMap map = load_sos(c.get("map"));
  RenderSpec spec;
  spec.lo = c.get_double("lo");
  spec.hi = c.get_double("hi");
  spec.pixel_scale = int(c.get_int("scale"));
  const std::string cm = c.get("colormap");
  if (cm == "grayscale")
    spec.colormap = Colormap::grayscale;
  else if (cm == "thermal")
    spec.colormap = Colormap::thermal;
  else
    throw ConfigError("unknown colormap: " + cm);
  write_png_file(c.get("out"), render_png(map, spec));
  return 0;
}

int cmd_stack(int argc, char** argv) {
  RunConfig c = parse_args({{"ckpt", ""},
                            {"list", ""},
                            {"outdir", ""},
                            {"dx", "0.001"},
                            {"lo", "1400"},
                            {"hi", "2900"}},
                           argc, argv, 2);
  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  Grid2D grid(model.nx, model.nz, c.get_double("dx"));

  std::ifstream ls(c.get("list"));
  if (!ls) throw IoError("cannot open slice list: " + c.get("list"));
  std::vector<std::string> slices;
  std::string line;
  while (std::getline(ls, line))
    if (!line.empty()) slices.push_back(line);
  if (slices.empty()) throw IoError("slice list is empty: " + c.get("list"));

  const fs::path outdir = c.get("outdir");
  fs::create_directories(outdir);
  RenderSpec spec;
  spec.lo = c.get_double("lo");
  spec.hi = c.get_double("hi");
  for (std::size_t i = 0; i < slices.size(); ++i) {
    RfCube cube = load_rfc(slices[i]);
    SosMap map = infer_map(model, ckpt.params, cube, grid, nullptr);
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%03zu", i);
    save_sos(map, (outdir / (std::string(name) + ".sos")).string());
    write_png_file((outdir / (std::string(name) + ".png")).string(),
                   render_png(map, spec));
  }
  return 0;
}

int cmd_bench(int argc, char** argv) {
  KV keys = grid_keys();
  keys.insert(keys.end(), {{"ckpt", ""},
                           {"rfc", ""},
                           {"ring_diameter", "0.048"},
                           {"sponge_cells", "3"},
                           {"fwi_iters", "50"}});
  RunConfig c = parse_args(keys, argc, argv, 2);
  Checkpoint ckpt = load_checkpoint(c.get("ckpt"));
  AttUctConfig model = model_from_metadata(ckpt);
  RfCube cube = load_rfc(c.get("rfc"));
  Grid2D grid = grid_from(c);

  using clock = std::chrono::steady_clock;
  // network inference: median of 5 runs after 1 warmup
  infer_map(model, ckpt.params, cube, grid, nullptr);
  std::vector<double> runs;
  for (int r = 0; r < 5; ++r) {
    const auto t0 = clock::now();
    infer_map(model, ckpt.params, cube, grid, nullptr);
    runs.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  std::sort(runs.begin(), runs.end());
  const double infer_s = runs[2];

  AcquisitionConfig acq;
  acq.fs = 1.0 / cube.dt_out;
  acq.nt_out = cube.nt;
  acq.f0 = cube.f0;
  acq.n_tx = acq.n_rx = cube.n_tx;
  acq.sponge_cells = int(c.get_int("sponge_cells"));
  acq.validate();
  RingArray array = make_ring_array(cube.n_tx, c.get_double("ring_diameter"),
                                    grid, acq.sponge_cells);
  Wavelet w = ricker_wavelet(acq.f0, acq.dt_out(), acq.nt_out);
  FwiConfig fwi;
  fwi.max_iters = int(c.get_int("fwi_iters"));
  fwi.stop_tol = 1e-12;  // effectively run the full budget for honest timing
  const auto t0 = clock::now();
  fwi_reconstruct(cube, array, w, acq, fwi, grid);
  const double fwi_s =
      std::chrono::duration<double>(clock::now() - t0).count();

  std::printf(
      "{\"infer_seconds\": %.6g, \"fwi_seconds\": %.6g, \"ratio\": %.6g}\n",
      infer_s, fwi_s, fwi_s / infer_s);
  return 0;
}

void print_usage() {
  std::fputs(
      "usage: uct <subcommand> [--config FILE] [--key value ...]\n"
      "subcommands:\n"
      "  phantom simulate das fwi train-stage1 finetune-stage2 finetune-lora\n"
      "  infer eval lr-sweep render stack bench\n",
      stderr);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    print_usage();
    return 1;
  }
  const std::string cmd = argv[1];
  try {
    if (cmd == "phantom") return cmd_phantom(argc, argv);
    if (cmd == "simulate") return cmd_simulate(argc, argv);
    if (cmd == "das") return cmd_das(argc, argv);
    if (cmd == "fwi") return cmd_fwi(argc, argv);
    if (cmd == "train-stage1") return cmd_train_stage1(argc, argv);
    if (cmd == "finetune-stage2") return cmd_finetune_stage2(argc, argv);
    if (cmd == "finetune-lora") return cmd_finetune_lora(argc, argv);
    if (cmd == "infer") return cmd_infer(argc, argv);
    if (cmd == "eval") return cmd_eval(argc, argv);
    if (cmd == "lr-sweep") return cmd_lr_sweep(argc, argv);
    if (cmd == "render") return cmd_render(argc, argv);
    if (cmd == "stack") return cmd_stack(argc, argv);
    if (cmd == "bench") return cmd_bench(argc, argv);
    std::fprintf(stderr, "error: unknown subcommand '%s'\n", cmd.c_str());
    print_usage();
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: numerical: %s\n", e.what());
    return 3;
  } catch (const Error& e) {  // IoError, ShapeError, GeometryError
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 2;
  }
}
