#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vba/engine.hpp"
#include "vba/nn.hpp"
#include "vba/scm_gaussian.hpp"

namespace vba::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal formatting for doubles.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw IoError("format_double failed");
  return std::string(buf.data(), p);
}

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("unexpected end of file");
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(v));
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream is(path, mode);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return is;
}

}  // namespace detail

// --- Dataset container -----------------------------------------------------
// magic "VBDS", version byte, u64 n, u64 d, origin tag byte, 32-byte config
// fingerprint, then row-major f64 blocks for x, y, z.

inline constexpr char kDatasetMagic[4] = {'V', 'B', 'D', 'S'};
inline constexpr std::uint8_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  auto os = detail::open_out(path, std::ios::binary);
  detail::write_bytes(os, kDatasetMagic, 4);
  detail::write_pod(os, kDatasetVersion);
  detail::write_pod<std::uint64_t>(os, ds.n);
  detail::write_pod<std::uint64_t>(os, ds.d);
  detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(ds.origin));
  detail::write_bytes(os, ds.config_fingerprint.data(), 32);
  detail::write_bytes(os, ds.x.data(), ds.x.size() * 8);
  detail::write_bytes(os, ds.y.data(), ds.y.size() * 8);
  detail::write_bytes(os, ds.z.data(), ds.z.size() * 8);
  if (!os) throw IoError("write failed: " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  auto is = detail::open_in(path, std::ios::binary);
  char magic[4];
  detail::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw IoError("not a dataset file: " + path.string());
  if (detail::read_pod<std::uint8_t>(is) != kDatasetVersion)
    throw IoError("unsupported dataset version: " + path.string());
  Dataset ds;
  ds.n = detail::read_pod<std::uint64_t>(is);
  ds.d = detail::read_pod<std::uint64_t>(is);
  ds.origin = static_cast<Origin>(detail::read_pod<std::uint8_t>(is));
  detail::read_bytes(is, ds.config_fingerprint.data(), 32);
  ds.x.resize(ds.n * ds.d);
  ds.y.resize(ds.n * ds.d);
  ds.z.resize(ds.n * ds.d);
  detail::read_bytes(is, ds.x.data(), ds.x.size() * 8);
  detail::read_bytes(is, ds.y.data(), ds.y.size() * 8);
  detail::read_bytes(is, ds.z.data(), ds.z.size() * 8);
  return ds;
}

// Text export: one row per line, columns x_0.., y_0.., z_0.., with a header.
inline void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  auto os = detail::open_out(path, std::ios::out);
  for (std::size_t k = 0; k < ds.d; ++k) os << (k ? "," : "") << "x_" << k;
  for (std::size_t k = 0; k < ds.d; ++k) os << ",y_" << k;
  for (std::size_t k = 0; k < ds.d; ++k) os << ",z_" << k;
  os << "\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t k = 0; k < ds.d; ++k)
      os << (k ? "," : "") << format_double(ds.x[i * ds.d + k]);
    for (std::size_t k = 0; k < ds.d; ++k) os << "," << format_double(ds.y[i * ds.d + k]);
    for (std::size_t k = 0; k < ds.d; ++k) os << "," << format_double(ds.z[i * ds.d + k]);
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path.string());
}

// --- SCM config text file --------------------------------------------------
// Human-readable, whitespace-separated, round-trip exact.

inline void save_config(const ScmConfig& config, const std::filesystem::path& path) {
  auto os = detail::open_out(path, std::ios::out);
  os << "vba-scm-config 1\n";
  os << "seed " << config.seed << "\n";
  os << "dim " << config.dims.size() << "\n";
  os << "# k c1 c2 c3 sigma1 sigma2\n";
  for (std::size_t k = 0; k < config.dims.size(); ++k) {
    const ScmDim& d = config.dims[k];
    os << k << " " << format_double(d.c1) << " " << format_double(d.c2) << " "
       << format_double(d.c3) << " " << format_double(d.sigma1) << " "
       << format_double(d.sigma2) << "\n";
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline ScmConfig load_config(const std::filesystem::path& path) {
  auto is = detail::open_in(path, std::ios::in);
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "vba-scm-config" || version != 1)
    throw IoError("not a config file: " + path.string());
  ScmConfig config;
  std::size_t dim = 0;
  std::string key;
  is >> key >> config.seed;
  if (key != "seed") throw IoError("malformed config: " + path.string());
  is >> key >> dim;
  if (key != "dim") throw IoError("malformed config: " + path.string());
  std::string comment_line;
  std::getline(is, comment_line);
  std::getline(is, comment_line);  // "# k c1 ..." comment
  config.dims.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    std::size_t idx;
    ScmDim& d = config.dims[k];
    is >> idx >> d.c1 >> d.c2 >> d.c3 >> d.sigma1 >> d.sigma2;
    if (!is || idx != k) throw IoError("malformed config row: " + path.string());
  }
  config.validate();
  return config;
}

// --- Model checkpoints -----------------------------------------------------
// magic "VBCK", version, component tag (0 prior / 1 decoder / 2 encoder),
// u32 layer-size count and entries, activation byte, flat f64 parameter
// vector, then a flag plus optimizer state if present.

inline constexpr char kCheckpointMagic[4] = {'V', 'B', 'C', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class Component : std::uint8_t { Prior = 0, Decoder = 1, Encoder = 2 };

namespace detail {

inline void write_checkpoint(const std::filesystem::path& path, Component tag,
                             const std::vector<std::size_t>& layer_sizes, std::uint8_t act,
                             std::span<const double> params, const OptimizerState* opt) {
  auto os = open_out(path, std::ios::binary);
  write_bytes(os, kCheckpointMagic, 4);
  write_pod(os, kCheckpointVersion);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(tag));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layer_sizes.size()));
  for (std::size_t s : layer_sizes) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  write_pod<std::uint8_t>(os, act);
  write_pod<std::uint64_t>(os, params.size());
  write_bytes(os, params.data(), params.size() * 8);
  write_pod<std::uint8_t>(os, opt ? 1 : 0);
  if (opt) {
    write_pod<std::uint64_t>(os, opt->step);
    write_pod(os, opt->lr);
    write_pod(os, opt->beta1);
    write_pod(os, opt->beta2);
    write_pod(os, opt->eps);
    write_bytes(os, opt->m.data(), opt->m.size() * 8);
    write_bytes(os, opt->v.data(), opt->v.size() * 8);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

struct RawCheckpoint {
  Component tag;
  std::vector<std::size_t> layer_sizes;
  std::uint8_t act = 0;
  std::vector<double> params;
  bool has_optimizer = false;
  OptimizerState optimizer;
};

inline RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::binary);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  if (read_pod<std::uint8_t>(is) != kCheckpointVersion)
    throw IoError("unsupported checkpoint version: " + path.string());
  RawCheckpoint ck;
  ck.tag = static_cast<Component>(read_pod<std::uint8_t>(is));
  const auto nsizes = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nsizes; ++i)
    ck.layer_sizes.push_back(read_pod<std::uint32_t>(is));
  ck.act = read_pod<std::uint8_t>(is);
  ck.params.resize(read_pod<std::uint64_t>(is));
  read_bytes(is, ck.params.data(), ck.params.size() * 8);
  ck.has_optimizer = read_pod<std::uint8_t>(is) != 0;
  if (ck.has_optimizer) {
    ck.optimizer = OptimizerState(ck.params.size());
    ck.optimizer.step = read_pod<std::uint64_t>(is);
    ck.optimizer.lr = read_pod<double>(is);
    ck.optimizer.beta1 = read_pod<double>(is);
    ck.optimizer.beta2 = read_pod<double>(is);
    ck.optimizer.eps = read_pod<double>(is);
    read_bytes(is, ck.optimizer.m.data(), ck.optimizer.m.size() * 8);
    read_bytes(is, ck.optimizer.v.data(), ck.optimizer.v.size() * 8);
  }
  return ck;
}

}  // namespace detail

inline void save_prior(const GaussianPrior& prior, const std::filesystem::path& path) {
  detail::write_checkpoint(path, Component::Prior, {prior.dim}, 0, prior.params, nullptr);
}

inline void save_mlp(const Mlp& mlp, Component tag, const std::filesystem::path& path) {
  detail::write_checkpoint(path, tag, mlp.sizes(),
                           static_cast<std::uint8_t>(mlp.activation()), mlp.params(), nullptr);
}

inline GaussianPrior load_prior(const std::filesystem::path& path) {
  auto ck = detail::read_checkpoint(path);
  if (ck.tag != Component::Prior) throw IoError("checkpoint is not a prior: " + path.string());
  GaussianPrior prior(ck.layer_sizes.at(0));
  if (ck.params.size() != prior.params.size())
    throw IoError("prior checkpoint size mismatch: " + path.string());
  prior.params = std::move(ck.params);
  return prior;
}

inline Mlp load_mlp(const std::filesystem::path& path, Component expected) {
  auto ck = detail::read_checkpoint(path);
  if (ck.tag != expected) throw IoError("unexpected checkpoint component: " + path.string());
  Mlp mlp(ck.layer_sizes, static_cast<Activation>(ck.act));
  if (ck.params.size() != mlp.param_count())
    throw IoError("mlp checkpoint size mismatch: " + path.string());
  std::copy(ck.params.begin(), ck.params.end(), mlp.params().begin());
  return mlp;
}

inline void save_model(const VbaModel& m, const std::filesystem::path& dir,
                       const std::string& stem) {
  save_prior(m.prior, dir / (stem + ".prior.ckpt"));
  save_mlp(m.decoder, Component::Decoder, dir / (stem + ".decoder.ckpt"));
  save_mlp(m.encoder, Component::Encoder, dir / (stem + ".encoder.ckpt"));
}

inline VbaModel load_model(const std::filesystem::path& dir, const std::string& stem) {
  VbaModel m;
  m.prior = load_prior(dir / (stem + ".prior.ckpt"));
  m.decoder = load_mlp(dir / (stem + ".decoder.ckpt"), Component::Decoder);
  m.encoder = load_mlp(dir / (stem + ".encoder.ckpt"), Component::Encoder);
  m.dim = m.prior.dim;
  if (m.decoder.input_dim() != 2 * m.dim || m.encoder.input_dim() != 2 * m.dim)
    throw IoError("model checkpoints have inconsistent dimensions");
  return m;
}

// --- Metrics ---------------------------------------------------------------

// Flat key/value text, one metric per line.
inline void save_metrics_text(const Metrics& met, const std::filesystem::path& path) {
  auto os = detail::open_out(path, std::ios::out);
  os << "elbo_mean " << format_double(met.elbo_mean) << "\n";
  os << "term_prior " << format_double(met.term_prior) << "\n";
  os << "term_decoder " << format_double(met.term_decoder) << "\n";
  os << "term_encoder_entropy " << format_double(met.term_encoder_entropy) << "\n";
  os << "encoder_data_loglik " << format_double(met.encoder_data_loglik) << "\n";
  os << "naive_mc_mean " << format_double(met.naive_mc_mean) << "\n";
  os << "ground_truth_mae " << format_double(met.ground_truth_mae) << "\n";
  os << "mode " << met.mode << "\n";
  os << "k " << met.k << "\n";
  os << "seed " << met.seed << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

// --- CSV helper ------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : os_(detail::open_out(path, std::ios::out)), columns_(header.size()), path_(path) {
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw IoError("CsvWriter: wrong cell count for " + path_);
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << "\n";
    if (!os_) throw IoError("write failed: " + path_);
  }

 private:
  std::ofstream os_;
  std::size_t columns_;
  std::string path_;
};

}  // namespace vba::io
