#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// End-to-end checks against the built command-line binary. The binary path
// comes in through the LAPAR_CLI_PATH compile definition.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "lapar/dictionary.hpp"
#include "lapar/image.hpp"
#include "lapar/net.hpp"
#include "lapar/train.hpp"

using namespace lapar;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(LAPAR_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

TEST_CASE("build-dict writes a loadable dictionary plus a sidecar") {
  CHECK(run("build-dict --preset 14 --out cli_dict.ldic") == 0);
  REQUIRE(file_exists("cli_dict.ldic"));
  auto d = load_dictionary("cli_dict.ldic");
  CHECK(d.L == 14);
  CHECK(d.k == 5);
  REQUIRE(file_exists("cli_dict.ldic.run.json"));
  auto side = slurp("cli_dict.ldic.run.json");
  CHECK(side.find("\"subcommand\": \"build-dict\"") != std::string::npos);
}

TEST_CASE("build-dict can export filter visualizations") {
  CHECK(run("build-dict --preset 14 --out cli_dict2.ldic --export-png cli_filters") == 0);
  CHECK(file_exists("cli_filters/montage.png"));
  CHECK(file_exists("cli_filters/filter_000.png"));
  auto montage = load_image("cli_filters/montage.png");
  CHECK(montage.height > 0);
}

TEST_CASE("inspect prints dictionary metadata") {
  CHECK(run("inspect --dict 14") == 0);
  auto out = slurp("cli_stdout.txt");
  CHECK(out.find("L=14") != std::string::npos);
}

TEST_CASE("report lists the three presets with ordered parameter counts") {
  CHECK(run("report --scale 2 --out-h 64 --out-w 64") == 0);
  auto out = slurp("cli_stdout.txt");
  CHECK(out.find("lapar-a") != std::string::npos);
  CHECK(out.find("lapar-b") != std::string::npos);
  CHECK(out.find("lapar-c") != std::string::npos);
}

TEST_CASE("train then super-resolve an image end to end") {
  {
    std::ofstream cfg("cli_train.json");
    cfg << R"({
      "task": "sr",
      "model": {"channels": 4, "blocks": 1, "L": 14, "k": 5, "scale": 2},
      "dict": "14",
      "data": "synthetic:count=2,size=32,seed=1",
      "batch_size": 2,
      "total_iters": 3,
      "patch": 16,
      "seed": 5,
      "checkpoint_every": 0,
      "validate_every": 0,
      "out_prefix": "cli_model"
    })";
  }
  CHECK(run("train --config cli_train.json") == 0);
  REQUIRE(file_exists("cli_model_final.lpar"));
  auto ck = load_checkpoint<float>("cli_model_final.lpar");
  CHECK(ck.model.config.L == 14);

  Image lr = make_synthetic_textures(1, 20, 2)[0];
  save_png(lr, "cli_lr.png");
  CHECK(run("sr --model cli_model_final.lpar --dict 14 --in cli_lr.png --out cli_sr.png") == 0);
  REQUIRE(file_exists("cli_sr.png"));
  auto out = load_image("cli_sr.png");
  CHECK(out.height == 40);
  CHECK(out.width == 40);
  CHECK(file_exists("cli_sr.png.run.json"));
  auto timing = slurp("cli_stdout.txt");
  CHECK(timing.find("timing:") != std::string::npos);

  // both execution paths work through the CLI
  CHECK(run("sr --model cli_model_final.lpar --dict 14 --in cli_lr.png --out cli_sr_pw.png "
            "--path pixelwise") == 0);
  CHECK(file_exists("cli_sr_pw.png"));

  // f64 precision flag is accepted
  CHECK(run("--precision f64 sr --model cli_model_final.lpar --dict 14 --in cli_lr.png "
            "--out cli_sr_f64.png") == 0);
}

TEST_CASE("eval prints the metric table for a synthetic set") {
  REQUIRE(file_exists("cli_model_final.lpar"));
  CHECK(run("eval --model cli_model_final.lpar --dict 14 "
            "--set synthetic:count=2,size=32,seed=3") == 0);
  auto out = slurp("cli_stdout.txt");
  CHECK(out.find("PSNR-dB") != std::string::npos);
  CHECK(out.find("bicubic") != std::string::npos);
  CHECK(out.find("mean") != std::string::npos);
}

TEST_CASE("ablate ranks dictionaries on a synthetic set") {
  CHECK(run("ablate --dicts 14 cli_dict.ldic --set synthetic:count=2,size=24,seed=4 "
            "--scale 2") == 0);
  auto out = slurp("cli_stdout.txt");
  CHECK(out.find("dictionary-name") != std::string::npos);
  CHECK(out.find("cli_dict.ldic") != std::string::npos);
}

TEST_CASE("task/scale mismatches are rejected with a nonzero exit") {
  REQUIRE(file_exists("cli_model_final.lpar"));
  CHECK(run("denoise --model cli_model_final.lpar --dict 14 --in cli_lr.png --out x.png") != 0);
  auto err = slurp("cli_stderr.txt");
  CHECK(err.find("error:") != std::string::npos);
  CHECK(run("sr --model cli_model_final.lpar --dict 14 --in cli_lr.png --out x.png --scale 3") != 0);
  CHECK(run("sr --model cli_model_final.lpar --dict 24 --in cli_lr.png --out x.png") != 0);
}

TEST_CASE("bad arguments produce a nonzero exit") {
  CHECK(run("") != 0);
  CHECK(run("build-dict") != 0);                       // missing --out
  CHECK(run("build-dict --preset 13 --out x.ldic") != 0);
  CHECK(run("--precision f16 report") != 0);
  CHECK(run("inspect --model does_not_exist.lpar") != 0);
}
