#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("VBA_CLI_PATH");
  REQUIRE(p != nullptr);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vba_cli_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("discrete-check passes and writes its report") {
  TempDir tmp;
  const auto report = tmp.path / "report.txt";
  REQUIRE(run("discrete-check --out " + report.string()) == 0);
  const std::string text = slurp(report);
  REQUIRE(text.find("strict_inequality holds") != std::string::npos);
  REQUIRE(text.find("expected_log_observational") != std::string::npos);
}

TEST_CASE("gen-data produces the expected files deterministically") {
  TempDir tmp;
  const auto a = tmp.path / "a";
  const auto b = tmp.path / "b";
  const std::string args = "gen-data --dim 2 --n 50 --n-ood 20 --seed 11 --csv --out ";
  REQUIRE(run(args + a.string()) == 0);
  REQUIRE(run(args + b.string()) == 0);
  for (const char* name :
       {"scm_config.txt", "observational.ds", "ood.ds", "observational.csv", "ood.csv"}) {
    REQUIRE(fs::exists(a / name));
    REQUIRE(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("train, finetune and eval form a working pipeline") {
  TempDir tmp;
  const auto data = tmp.path / "data";
  const auto model = tmp.path / "model";
  const auto evald = tmp.path / "eval";
  REQUIRE(run("gen-data --dim 2 --n 300 --n-ood 50 --seed 21 --out " + data.string()) == 0);
  REQUIRE(run("train --data " + (data / "observational.ds").string() +
              " --epochs 3 --batch 64 --seed 22 --out " + model.string()) == 0);
  for (const char* name : {"separate.prior.ckpt", "separate.decoder.ckpt",
                           "separate.encoder.ckpt", "separate_loss.csv"})
    REQUIRE(fs::exists(model / name));

  REQUIRE(run("finetune --data " + (data / "observational.ds").string() + " --model-dir " +
              model.string() + " --epochs 2 --batch 64 --seed 23 --out " + model.string()) == 0);
  REQUIRE(fs::exists(model / "finetuned.encoder.ckpt"));
  REQUIRE(fs::exists(model / "finetune_elbo.csv"));
  // the frozen components are carried over unchanged
  REQUIRE(slurp(model / "finetuned.prior.ckpt") == slurp(model / "separate.prior.ckpt"));
  REQUIRE(slurp(model / "finetuned.decoder.ckpt") == slurp(model / "separate.decoder.ckpt"));

  REQUIRE(run("eval --scm-config " + (data / "scm_config.txt").string() + " --data " +
              (data / "observational.ds").string() + " --data-ood " +
              (data / "ood.ds").string() + " --model-dir " + model.string() +
              " --model-stem finetuned --k 8 --seed 24 --out " + evald.string()) == 0);
  for (const char* name :
       {"in_distribution.metrics.txt", "in_distribution.metrics.json",
        "out_of_distribution.metrics.txt", "out_of_distribution.metrics.json", "eval.csv"})
    REQUIRE(fs::exists(evald / name));
  const std::string csv = slurp(evald / "eval.csv");
  REQUIRE(csv.rfind("dataset,mode,elbo_mean,", 0) == 0);
  REQUIRE(csv.find("\nin_distribution,finetuned,") != std::string::npos);
  REQUIRE(csv.find("\nout_of_distribution,finetuned,") != std::string::npos);
}

TEST_CASE("loss curve files have the advertised headers") {
  TempDir tmp;
  const auto data = tmp.path / "data";
  const auto model = tmp.path / "model";
  REQUIRE(run("gen-data --dim 1 --n 100 --n-ood 10 --seed 31 --out " + data.string()) == 0);
  REQUIRE(run("train --data " + (data / "observational.ds").string() +
              " --epochs 2 --batch 32 --seed 32 --out " + model.string()) == 0);
  REQUIRE(slurp(model / "separate_loss.csv")
              .rfind("epoch,loss_prior,loss_decoder,loss_encoder", 0) == 0);
  REQUIRE(run("finetune --data " + (data / "observational.ds").string() + " --model-dir " +
              model.string() + " --epochs 2 --batch 32 --seed 33 --out " + model.string()) == 0);
  REQUIRE(slurp(model / "finetune_elbo.csv").rfind("epoch,elbo", 0) == 0);
}

TEST_CASE("pitfall command emits a well-formed CSV") {
  TempDir tmp;
  const auto csv_path = tmp.path / "pitfall.csv";
  REQUIRE(run("pitfall --dim 1 --n 200 --epochs 3 --separate-epochs 2 --batch 64 --seed 41 "
              "--out " + csv_path.string()) == 0);
  const std::string csv = slurp(csv_path);
  REQUIRE(csv.rfind("epoch,fully_joint_elbo,finetuned_elbo,analytic_observational,"
                    "analytic_interventional", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 epochs
}

TEST_CASE("sweep command emits one row per method per run") {
  TempDir tmp;
  const auto csv_path = tmp.path / "sweep.csv";
  REQUIRE(run("sweep --dims 1 2 --repeats 1 --n 200 --n-eval 16 --epochs 2 "
              "--finetune-epochs 1 --k 8 --batch 64 --seed 51 --out " + csv_path.string()) == 0);
  const std::string csv = slurp(csv_path);
  REQUIRE(csv.rfind("dim,repeat,method,abs_error", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 2 dims x 3 methods
  REQUIRE(csv.find("vba_separate") != std::string::npos);
  REQUIRE(csv.find("vba_finetuned") != std::string::npos);
  REQUIRE(csv.find("naive_mc") != std::string::npos);
}

TEST_CASE("usage and io errors map to distinct exit codes") {
  TempDir tmp;
  REQUIRE(run("no-such-command") == 2);
  REQUIRE(run("train") == 2);  // missing required --data
  REQUIRE(run("train --data " + (tmp.path / "missing.ds").string() + " --epochs 1 --out " +
              tmp.path.string()) == 3);
}
