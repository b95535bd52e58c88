// Command-line surface for the pixel-adaptive restoration toolkit.
//
// Subcommands: build-dict, train, sr, denoise, deblock, eval, ablate,
// report, inspect. Every run echoes its fully resolved configuration to a
// sidecar JSON file next to the primary output.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lapar/assembly.hpp"
#include "lapar/dictionary.hpp"
#include "lapar/image.hpp"
#include "lapar/metrics.hpp"
#include "lapar/net.hpp"
#include "lapar/oracle.hpp"
#include "lapar/resample.hpp"
#include "lapar/train.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  int threads = 0;
  std::string precision = "f32";
};

void apply_threads(const GlobalOpts& g) {
#ifdef _OPENMP
  if (g.threads > 0) omp_set_num_threads(g.threads);
#else
  (void)g;
#endif
}

void write_sidecar(const std::string& primary_output, const std::string& subcommand,
                   const GlobalOpts& g, const json& resolved) {
  json side;
  side["subcommand"] = subcommand;
  side["seed"] = g.seed;
  side["threads"] = g.threads;
  side["precision"] = g.precision;
  side["config"] = resolved;
  std::ofstream f(primary_output + ".run.json");
  f << side.dump(2) << "\n";
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(f);
}

lapar::Dictionary load_dict_arg(const std::string& arg) {
  if (arg == "72" || arg == "24" || arg == "14")
    return lapar::build_dictionary(lapar::preset_config(arg));
  return lapar::load_dictionary(arg);
}

std::vector<lapar::Image> load_image_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto p = e.path().string();
    if (lapar::ends_with(p, ".png") || lapar::ends_with(p, ".pgm") || lapar::ends_with(p, ".ppm"))
      files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no images found in " + dir);
  std::vector<lapar::Image> out;
  for (const auto& f : files) out.push_back(lapar::load_image(f));
  return out;
}

// Dataset specs: "synthetic:count=16,size=96,seed=7" or a directory path.
std::vector<lapar::Image> load_dataset_spec(const std::string& spec, uint64_t default_seed) {
  if (spec.rfind("synthetic", 0) == 0) {
    int count = 16, size = 96;
    uint64_t seed = default_seed;
    auto pos = spec.find(':');
    if (pos != std::string::npos) {
      std::istringstream ss(spec.substr(pos + 1));
      std::string kv;
      while (std::getline(ss, kv, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        std::string key = kv.substr(0, eq);
        long long val = std::stoll(kv.substr(eq + 1));
        if (key == "count") count = static_cast<int>(val);
        else if (key == "size") size = static_cast<int>(val);
        else if (key == "seed") seed = static_cast<uint64_t>(val);
      }
    }
    return lapar::make_synthetic_textures(count, size, seed);
  }
  return load_image_dir(spec);
}

lapar::TrainConfig train_config_from_json(const json& j) {
  lapar::TrainConfig cfg;
  if (j.contains("task")) cfg.task = lapar::task_from_name(j.at("task"));
  cfg.model = lapar::model_config_from_json(j.value("model", json::object()));
  cfg.model.task = cfg.task;
  if (cfg.task != lapar::Task::Sr) cfg.model.scale = 1;
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.total_iters = j.value("total_iters", cfg.total_iters);
  cfg.lr_init = j.value("lr_init", cfg.lr_init);
  cfg.lr_final = j.value("lr_final", cfg.lr_final);
  cfg.patch = j.value("patch", cfg.patch);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eps_charbonnier = j.value("eps_charbonnier", cfg.eps_charbonnier);
  if (j.contains("noise_range")) {
    cfg.noise_min = j["noise_range"][0].get<double>() / 255.0;
    cfg.noise_max = j["noise_range"][1].get<double>() / 255.0;
  }
  if (j.contains("quality_range")) {
    cfg.quality_min = j["quality_range"][0];
    cfg.quality_max = j["quality_range"][1];
  }
  cfg.augment = j.value("augment", cfg.augment);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.validate_every = j.value("validate_every", cfg.validate_every);
  cfg.checkpoint_prefix = j.value("out_prefix", std::string("model"));
  return cfg;
}

int cmd_build_dict(const GlobalOpts& g, const std::string& config_path,
                   const std::string& preset, const std::string& out,
                   const std::string& export_dir) {
  lapar::DictionaryConfig cfg =
      config_path.empty() ? lapar::preset_config(preset)
                          : lapar::dictionary_config_from_json(load_json(config_path));
  auto dict = lapar::build_dictionary(cfg);
  lapar::save_dictionary(dict, out);
  if (!export_dir.empty()) {
    fs::create_directories(export_dir);
    lapar::export_filters(dict, export_dir);
  }
  write_sidecar(out, "build-dict", g, lapar::dictionary_config_to_json(cfg));
  std::cout << "wrote " << dict.L << "-filter dictionary to " << out << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& config_path) {
  json j = load_json(config_path);
  lapar::TrainConfig cfg = train_config_from_json(j);
  auto dict = load_dict_arg(j.value("dict", std::string("72")));
  auto dataset = load_dataset_spec(j.value("data", std::string("synthetic")), cfg.seed);
  std::vector<lapar::EvalPair> valset;
  if (j.contains("val_data")) {
    auto val_images = load_dataset_spec(j["val_data"], cfg.seed + 1);
    valset = lapar::prepare_task_data(val_images, cfg, cfg.seed + 1);
  }
  std::string log_path = j.value("log", cfg.checkpoint_prefix + "_log.tsv");
  std::ofstream log(log_path);
  log << "iter\tlr\tloss\tval-psnr\n";
  auto t0 = std::chrono::steady_clock::now();
  auto res = lapar::train(cfg, dataset, dict, valset, {}, {}, 0,
                          [&](const lapar::TrainLogRow& r) {
                            log << r.iter << "\t" << r.lr << "\t" << r.loss << "\t";
                            if (r.val_psnr >= 0.0) log << r.val_psnr;
                            log << "\n";
                            if ((r.iter + 1) % 100 == 0)
                              std::cout << "iter " << (r.iter + 1) << " loss " << r.loss << "\n";
                          });
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string final_path = cfg.checkpoint_prefix + "_final.lpar";
  lapar::save_checkpoint(res.model, final_path);
  write_sidecar(final_path, "train", g, j);
  std::cout << "trained " << cfg.total_iters << " iters in " << secs << "s; final checkpoint "
            << final_path << "\n";
  if (res.halted_nan) {
    std::cerr << "training halted on NaN loss; last good checkpoint retained\n";
    return 1;
  }
  return 0;
}

int run_restore(const GlobalOpts& g, const std::string& subcommand, const std::string& model_path,
                const std::string& dict_path, const std::string& in_path,
                const std::string& out_path, const std::string& path_name, int expect_scale) {
  auto ck = lapar::load_checkpoint<float>(model_path);
  auto dict = load_dict_arg(dict_path);
  if (dict.L != ck.model.config.L)
    throw std::runtime_error("dictionary L does not match checkpoint L");
  lapar::Task want = subcommand == "sr"        ? lapar::Task::Sr
                     : subcommand == "denoise" ? lapar::Task::Denoise
                                               : lapar::Task::Deblock;
  if (ck.model.config.task != want)
    throw std::runtime_error("checkpoint task is '" + lapar::task_name(ck.model.config.task) +
                             "', expected '" + lapar::task_name(want) + "'");
  if (expect_scale > 0 && ck.model.config.scale != expect_scale)
    throw std::runtime_error("checkpoint scale " + std::to_string(ck.model.config.scale) +
                             " does not match requested scale " + std::to_string(expect_scale));
  int s = ck.model.config.scale;
  lapar::Image input = lapar::load_image(in_path);
  lapar::Image in_y = lapar::luma(input);

  auto t0 = std::chrono::steady_clock::now();
  lapar::Image up = s > 1 ? lapar::bicubic_resize(in_y, s) : in_y;
  auto t1 = std::chrono::steady_clock::now();
  lapar::CoefficientMap phi = lapar::predict_coefficients(ck.model, in_y);
  auto t2 = std::chrono::steady_clock::now();
  auto path = path_name == "pixelwise" ? lapar::PredictPath::Pixelwise
                                       : lapar::PredictPath::Basisconv;
  lapar::Image restored;
  if (input.channels == 3) {
    // same coefficients on every channel, derived from luma structure
    lapar::Image up_rgb = s > 1 ? lapar::bicubic_resize(input, s) : input;
    restored = g.precision == "f64" ? lapar::enhance<double>(up_rgb, phi, dict, path)
                                    : lapar::enhance<float>(up_rgb, phi, dict, path);
  } else {
    restored = g.precision == "f64" ? lapar::enhance<double>(up, phi, dict, path)
                                    : lapar::enhance<float>(up, phi, dict, path);
  }
  auto t3 = std::chrono::steady_clock::now();
  restored.clamp01();
  lapar::save_image(restored, out_path);
  auto ms = [](auto a, auto b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
  std::cout << "timing: upsample " << ms(t0, t1) << " ms, coefficients " << ms(t1, t2)
            << " ms, filtering " << ms(t2, t3) << " ms (CPU wall clock)\n";
  json resolved = {{"model", model_path}, {"dict", dict_path},       {"in", in_path},
                   {"out", out_path},     {"path", path_name},       {"scale", s}};
  write_sidecar(out_path, subcommand, g, resolved);
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& model_path, const std::string& dict_path,
             const std::string& set_spec, const std::string& out_path) {
  auto ck = lapar::load_checkpoint<float>(model_path);
  auto dict = load_dict_arg(dict_path);
  auto images = load_dataset_spec(set_spec, g.seed);
  lapar::TrainConfig cfg;
  cfg.task = ck.model.config.task;
  cfg.model = ck.model.config;
  auto testset = lapar::prepare_task_data(images, cfg, g.seed);
  auto rows = lapar::evaluate(ck.model, dict, testset);
  std::string table = lapar::eval_table(rows);
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream f(out_path);
    f << table;
    write_sidecar(out_path, "eval", g, {{"model", model_path}, {"set", set_spec}});
  }
  return 0;
}

int cmd_ablate(const GlobalOpts& g, const std::vector<std::string>& dict_args,
               const std::string& set_spec, int scale, const std::string& out_path) {
  std::vector<lapar::NamedDictionary> dicts;
  for (const auto& d : dict_args) dicts.push_back({d, load_dict_arg(d)});
  auto images = load_dataset_spec(set_spec, g.seed);
  std::vector<std::pair<lapar::Image, lapar::Image>> pairs;
  lapar::DegradationSpec spec;
  spec.task = lapar::Task::Sr;
  spec.scale = scale;
  spec.blur = lapar::default_sr_blur(scale);
  for (auto& img : images) {
    lapar::Image hr = lapar::luma(img);
    pairs.emplace_back(lapar::degrade(hr, spec, g.seed), hr);
  }
  auto rows = lapar::ablation_report(dicts, pairs, lapar::RidgeProblem{});
  std::string table = lapar::ablation_table(rows);
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream f(out_path);
    f << table;
    write_sidecar(out_path, "ablate", g, {{"dicts", dict_args}, {"set", set_spec}});
  }
  return 0;
}

int cmd_report(const GlobalOpts&, int scale, int out_h, int out_w) {
  std::cout << "model\tparams\tmultiadds(" << out_h << "x" << out_w << ")\n";
  for (const std::string name : {"lapar-a", "lapar-b", "lapar-c"}) {
    auto cfg = lapar::model_preset(name);
    cfg.scale = scale;
    std::cout << name << "\t" << lapar::count_params(cfg) << "\t"
              << lapar::count_multiadds(cfg, out_h, out_w) << "\n";
  }
  return 0;
}

int cmd_inspect(const GlobalOpts&, const std::string& model_path, const std::string& dict_path) {
  if (!model_path.empty()) {
    auto ck = lapar::load_checkpoint<float>(model_path);
    std::cout << "checkpoint: " << model_path << "\n"
              << lapar::model_config_to_json(ck.model.config).dump(2) << "\n"
              << "params: " << lapar::count_params(ck.model.config) << "\n";
  }
  if (!dict_path.empty()) {
    auto d = load_dict_arg(dict_path);
    std::cout << "dictionary: " << dict_path << " (tag " << d.tag << ")\nL=" << d.L
              << " k=" << d.k << "\n";
    for (int i = 0; i < d.L; ++i)
      std::cout << "  basis " << i << " sum " << d.bases[i].sum() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixel-adaptive image restoration toolkit"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--threads", g.threads, "worker thread count (0 = default)");
  app.add_option("--precision", g.precision, "accumulation precision")
      ->check(CLI::IsMember({"f32", "f64"}));

  auto* bd = app.add_subcommand("build-dict", "build a filter dictionary");
  std::string bd_config, bd_preset = "72", bd_out = "dict.bin", bd_export;
  bd->add_option("--config", bd_config, "dictionary config JSON");
  bd->add_option("--preset", bd_preset, "preset name: 72, 24, 14");
  bd->add_option("--out", bd_out, "output dictionary file")->required();
  bd->add_option("--export-png", bd_export, "directory for per-filter PNGs + montage");

  auto* tr = app.add_subcommand("train", "train a coefficient predictor");
  std::string tr_config;
  tr->add_option("--config", tr_config, "training config JSON")->required();

  std::string r_model, r_dict, r_in, r_out, r_path = "basisconv";
  int r_scale = 0;
  auto* sr = app.add_subcommand("sr", "super-resolve an image");
  auto* dn = app.add_subcommand("denoise", "denoise an image");
  auto* db = app.add_subcommand("deblock", "remove blocking artifacts");
  for (auto* cmd : {sr, dn, db}) {
    cmd->add_option("--model", r_model, "checkpoint file")->required();
    cmd->add_option("--dict", r_dict, "dictionary file or preset")->required();
    cmd->add_option("--in", r_in, "input image")->required();
    cmd->add_option("--out", r_out, "output image")->required();
    cmd->add_option("--path", r_path, "execution path")
        ->check(CLI::IsMember({"pixelwise", "basisconv"}));
  }
  sr->add_option("--scale", r_scale, "expected upscaling factor");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on an image set");
  std::string ev_model, ev_dict, ev_set, ev_out;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--dict", ev_dict)->required();
  ev->add_option("--set", ev_set, "image directory or synthetic:... spec")->required();
  ev->add_option("--out", ev_out, "table output file (stdout if omitted)");

  auto* ab = app.add_subcommand("ablate", "oracle-fit comparison across dictionaries");
  std::vector<std::string> ab_dicts;
  std::string ab_set, ab_out;
  int ab_scale = 2;
  ab->add_option("--dicts", ab_dicts, "dictionary files/presets")->required();
  ab->add_option("--set", ab_set, "image directory or synthetic:... spec")->required();
  ab->add_option("--scale", ab_scale, "SR scale for degradation");
  ab->add_option("--out", ab_out, "table output file");

  auto* rp = app.add_subcommand("report", "parameter and multiply-add accounting");
  int rp_scale = 2, rp_h = 720, rp_w = 1280;
  rp->add_option("--scale", rp_scale);
  rp->add_option("--out-h", rp_h, "output height for MultiAdds");
  rp->add_option("--out-w", rp_w, "output width for MultiAdds");

  auto* in = app.add_subcommand("inspect", "print checkpoint/dictionary metadata");
  std::string in_model, in_dict;
  in->add_option("--model", in_model);
  in->add_option("--dict", in_dict);

  CLI11_PARSE(app, argc, argv);
  apply_threads(g);

  try {
    if (bd->parsed()) return cmd_build_dict(g, bd_config, bd_preset, bd_out, bd_export);
    if (tr->parsed()) return cmd_train(g, tr_config);
    if (sr->parsed()) return run_restore(g, "sr", r_model, r_dict, r_in, r_out, r_path, r_scale);
    if (dn->parsed()) return run_restore(g, "denoise", r_model, r_dict, r_in, r_out, r_path, 0);
    if (db->parsed()) return run_restore(g, "deblock", r_model, r_dict, r_in, r_out, r_path, 0);
    if (ev->parsed()) return cmd_eval(g, ev_model, ev_dict, ev_set, ev_out);
    if (ab->parsed()) return cmd_ablate(g, ab_dicts, ab_set, ab_scale, ab_out);
    if (rp->parsed()) return cmd_report(g, rp_scale, rp_h, rp_w);
    if (in->parsed()) return cmd_inspect(g, in_model, in_dict);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
