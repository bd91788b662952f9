#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vba/engine.hpp"
#include "vba/io.hpp"
#include "vba/scm_gaussian.hpp"

using namespace vba;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vba_io_test_" + std::to_string(::getpid()) + "_" +
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
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dataset round trip is exact") {
  TempDir tmp;
  const auto config = sample_config(3, 101);
  const auto ds = generate(config, 40, 102);
  const auto p = tmp.path / "d.ds";
  io::save_dataset(ds, p);
  const auto back = io::load_dataset(p);
  REQUIRE(back.n == ds.n);
  REQUIRE(back.d == ds.d);
  REQUIRE(back.origin == ds.origin);
  REQUIRE(back.config_fingerprint == ds.config_fingerprint);
  REQUIRE(back.x == ds.x);
  REQUIRE(back.y == ds.y);
  REQUIRE(back.z == ds.z);
}

TEST_CASE("dataset save is byte-stable") {
  TempDir tmp;
  const auto config = sample_config(2, 103);
  const auto ds = generate_ood(config, 10, 104);
  io::save_dataset(ds, tmp.path / "a.ds");
  io::save_dataset(ds, tmp.path / "b.ds");
  REQUIRE(slurp(tmp.path / "a.ds") == slurp(tmp.path / "b.ds"));
}

TEST_CASE("loading a non-dataset file fails cleanly") {
  TempDir tmp;
  const auto p = tmp.path / "junk.ds";
  std::ofstream(p) << "not a dataset";
  REQUIRE_THROWS_AS(io::load_dataset(p), io::IoError);
  REQUIRE_THROWS_AS(io::load_dataset(tmp.path / "missing.ds"), io::IoError);
}

TEST_CASE("truncated dataset is rejected") {
  TempDir tmp;
  const auto config = sample_config(2, 105);
  const auto ds = generate(config, 10, 106);
  const auto p = tmp.path / "full.ds";
  io::save_dataset(ds, p);
  const std::string bytes = slurp(p);
  const auto q = tmp.path / "cut.ds";
  std::ofstream(q, std::ios::binary) << bytes.substr(0, bytes.size() - 13);
  REQUIRE_THROWS_AS(io::load_dataset(q), io::IoError);
}

TEST_CASE("csv export has the expected shape") {
  TempDir tmp;
  const auto config = sample_config(2, 107);
  const auto ds = generate(config, 5, 108);
  const auto p = tmp.path / "d.csv";
  io::export_dataset_csv(ds, p);
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "x_0,x_1,y_0,y_1,z_0,z_1");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    REQUIRE(std::count(line.begin(), line.end(), ',') == 5);
    ++rows;
  }
  REQUIRE(rows == 5);
}

TEST_CASE("config round trip preserves every bit") {
  TempDir tmp;
  const auto config = sample_config(7, 109);
  const auto p = tmp.path / "c.txt";
  io::save_config(config, p);
  const auto back = io::load_config(p);
  REQUIRE(back.seed == config.seed);
  REQUIRE(back.dims.size() == config.dims.size());
  for (std::size_t k = 0; k < config.dims.size(); ++k) {
    REQUIRE(back.dims[k].c1 == config.dims[k].c1);
    REQUIRE(back.dims[k].c2 == config.dims[k].c2);
    REQUIRE(back.dims[k].c3 == config.dims[k].c3);
    REQUIRE(back.dims[k].sigma1 == config.dims[k].sigma1);
    REQUIRE(back.dims[k].sigma2 == config.dims[k].sigma2);
  }
  REQUIRE(fingerprint(back) == fingerprint(config));
}

TEST_CASE("malformed config files are rejected") {
  TempDir tmp;
  const auto p = tmp.path / "bad.txt";
  std::ofstream(p) << "something else entirely\n";
  REQUIRE_THROWS_AS(io::load_config(p), io::IoError);
}

TEST_CASE("model checkpoints round trip") {
  TempDir tmp;
  VbaModel m = make_model(3, 110, {16, 8});
  io::save_model(m, tmp.path, "ck");
  const auto back = io::load_model(tmp.path, "ck");
  REQUIRE(back.dim == 3);
  REQUIRE(back.prior.params == m.prior.params);
  REQUIRE(param_fingerprint(back.decoder.params()) == param_fingerprint(m.decoder.params()));
  REQUIRE(param_fingerprint(back.encoder.params()) == param_fingerprint(m.encoder.params()));
  REQUIRE(back.decoder.sizes() == m.decoder.sizes());
  REQUIRE(back.encoder.activation() == m.encoder.activation());
}

TEST_CASE("checkpoint component tags are enforced") {
  TempDir tmp;
  VbaModel m = make_model(2, 111);
  io::save_mlp(m.decoder, io::Component::Decoder, tmp.path / "d.ckpt");
  REQUIRE_THROWS_AS(io::load_mlp(tmp.path / "d.ckpt", io::Component::Encoder), io::IoError);
  REQUIRE_THROWS_AS(io::load_prior(tmp.path / "d.ckpt"), io::IoError);
}

TEST_CASE("mismatched checkpoint dimensions are rejected") {
  TempDir tmp;
  VbaModel a = make_model(2, 112);
  VbaModel b = make_model(3, 113);
  io::save_prior(b.prior, tmp.path / "mix.prior.ckpt");
  io::save_mlp(a.decoder, io::Component::Decoder, tmp.path / "mix.decoder.ckpt");
  io::save_mlp(a.encoder, io::Component::Encoder, tmp.path / "mix.encoder.ckpt");
  REQUIRE_THROWS_AS(io::load_model(tmp.path, "mix"), io::IoError);
}

TEST_CASE("metrics text holds one key per line") {
  TempDir tmp;
  Metrics met;
  met.elbo_mean = -1.25;
  met.term_prior = -1.0;
  met.term_decoder = -0.5;
  met.term_encoder_entropy = 0.25;
  met.encoder_data_loglik = -0.75;
  met.naive_mc_mean = -1.5;
  met.ground_truth_mae = 0.03125;
  met.mode = "finetuned";
  met.k = 100;
  met.seed = 7;
  const auto p = tmp.path / "m.txt";
  io::save_metrics_text(met, p);
  const std::string text = slurp(p);
  REQUIRE(text == "elbo_mean -1.25\nterm_prior -1\nterm_decoder -0.5\n"
                  "term_encoder_entropy 0.25\nencoder_data_loglik -0.75\n"
                  "naive_mc_mean -1.5\nground_truth_mae 0.03125\nmode finetuned\nk 100\nseed 7\n");
}

TEST_CASE("format_double round trips exactly") {
  for (double v : {0.1, -3.25, 1e-300, 12345.6789, -0.0}) {
    REQUIRE(std::stod(io::format_double(v)) == v);
  }
}

TEST_CASE("csv writer enforces column counts") {
  TempDir tmp;
  const auto p = tmp.path / "w.csv";
  io::CsvWriter w(p, {"a", "b"});
  w.row({"1", "2"});
  REQUIRE_THROWS_AS(w.row({"only-one"}), io::IoError);
}
