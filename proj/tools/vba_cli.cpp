// Experiment driver for variational backdoor adjustment on linear-Gaussian
// synthetic data: dataset generation, two-phase training, evaluation, the
// dimension sweep, the fully-joint pitfall demonstration, and the exact
// discrete counterexample check.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vba/engine.hpp"
#include "vba/io.hpp"
#include "vba/rng.hpp"
#include "vba/scm_discrete.hpp"
#include "vba/scm_gaussian.hpp"

namespace fs = std::filesystem;
using vba::io::format_double;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

void write_loss_csv(const vba::TrainReport& report, const fs::path& path) {
  if (report.mode == "separate") {
    vba::io::CsvWriter csv(path, {"epoch", "loss_prior", "loss_decoder", "loss_encoder"});
    for (std::size_t e = 0; e < report.loss_prior_curve.size(); ++e)
      csv.row({std::to_string(e), format_double(report.loss_prior_curve[e]),
               format_double(report.loss_decoder_curve[e]),
               format_double(report.loss_encoder_curve[e])});
  } else {
    vba::io::CsvWriter csv(path, {"epoch", "elbo"});
    for (std::size_t e = 0; e < report.elbo_curve.size(); ++e)
      csv.row({std::to_string(e), format_double(report.elbo_curve[e])});
  }
}

nlohmann::json metrics_json(const vba::Metrics& met) {
  return {{"elbo_mean", met.elbo_mean},
          {"term_prior", met.term_prior},
          {"term_decoder", met.term_decoder},
          {"term_encoder_entropy", met.term_encoder_entropy},
          {"encoder_data_loglik", met.encoder_data_loglik},
          {"naive_mc_mean", met.naive_mc_mean},
          {"ground_truth_mae", met.ground_truth_mae},
          {"mode", met.mode},
          {"k", met.k},
          {"seed", met.seed}};
}

void write_metrics(const vba::Metrics& met, const fs::path& dir, const std::string& stem) {
  vba::io::save_metrics_text(met, dir / (stem + ".metrics.txt"));
  std::ofstream os(dir / (stem + ".metrics.json"));
  if (!os) throw vba::io::IoError("cannot open for writing: " + (dir / stem).string());
  os << metrics_json(met).dump(2) << "\n";
}

std::vector<std::string> metrics_cells(const std::string& dataset, const vba::Metrics& met) {
  return {dataset,
          met.mode,
          format_double(met.elbo_mean),
          format_double(met.term_prior),
          format_double(met.term_decoder),
          format_double(met.term_encoder_entropy),
          format_double(met.encoder_data_loglik),
          format_double(met.naive_mc_mean),
          format_double(met.ground_truth_mae)};
}

const std::vector<std::string> kEvalHeader = {
    "dataset",       "mode",          "elbo_mean",         "term_prior",      "term_decoder",
    "term_encoder_entropy", "encoder_data_loglik", "naive_mc_mean", "ground_truth_mae"};

int run_discrete_check(const std::string& out_path) {
  const vba::DiscreteScm scm;  // defaults to the counterexample tables
  const double obs = vba::expected_log_observational(scm);
  const double intv = vba::expected_log_interventional(scm);
  const double obs_closed = (1.0 / 8.0) * std::log(1.0 / 3.0) +
                            (1.0 / 4.0) * std::log(2.0 / 3.0) +
                            (5.0 / 8.0) * std::log(0.5);
  const double intv_closed = (1.0 / 8.0) * std::log(3.0 / 8.0) +
                             (1.0 / 4.0) * std::log(5.0 / 8.0) +
                             (5.0 / 8.0) * std::log(0.5);
  std::ostringstream report;
  report << "expected_log_observational " << format_double(obs) << "\n";
  report << "expected_log_interventional " << format_double(intv) << "\n";
  report << "closed_form_observational " << format_double(obs_closed) << "\n";
  report << "closed_form_interventional " << format_double(intv_closed) << "\n";
  const bool ok = std::abs(obs - obs_closed) < 1e-12 && std::abs(intv - intv_closed) < 1e-12 &&
                  obs > intv;
  report << "strict_inequality " << (ok ? "holds" : "VIOLATED") << "\n";
  std::cout << report.str();
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw vba::io::IoError("cannot open for writing: " + out_path);
    os << report.str();
  }
  return ok ? kExitOk : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational backdoor adjustment experiments"};
  app.require_subcommand(1);
  app.set_config("--config");

  // shared knobs; each subcommand binds the ones it needs
  std::size_t dim = 15, n = 10000, n_ood = 2000, epochs = 60, batch = 256, k = 100;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::string data_path, data_ood_path, config_path, model_dir, model_stem = "separate",
              out_dir = ".", out_path;

  auto* gen = app.add_subcommand("gen-data", "sample an SCM config and generate datasets");
  gen->add_option("--dim", dim, "number of independent dimensions")->check(CLI::PositiveNumber);
  gen->add_option("--n", n, "observational rows")->check(CLI::PositiveNumber);
  gen->add_option("--n-ood", n_ood, "out-of-distribution rows")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--out", out_dir, "output directory");
  bool gen_csv = false;
  gen->add_flag("--csv", gen_csv, "also export datasets as CSV");

  auto* train = app.add_subcommand("train", "separate (MLE) training of the three components");
  train->add_option("--data", data_path, "observational dataset file")->required();
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--out", out_dir, "output directory for checkpoints and curves");

  auto* finetune = app.add_subcommand("finetune", "encoder-only finetuning of the bound");
  finetune->add_option("--data", data_path, "observational dataset file")->required();
  finetune->add_option("--model-dir", model_dir, "directory with separate checkpoints")
      ->required();
  finetune->add_option("--epochs", epochs, "finetuning epochs");
  finetune->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
  std::size_t finetune_k = 1;
  finetune->add_option("--k", finetune_k, "encoder samples per point during finetuning")
      ->check(CLI::PositiveNumber);
  finetune->add_option("--lr", lr, "learning rate");
  finetune->add_option("--seed", seed, "training seed");
  finetune->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a trained model against ground truth");
  eval->add_option("--scm-config", config_path, "SCM config file")->required();
  eval->add_option("--data", data_path, "in-distribution dataset file")->required();
  eval->add_option("--data-ood", data_ood_path, "out-of-distribution dataset file");
  eval->add_option("--model-dir", model_dir, "directory with checkpoints")->required();
  eval->add_option("--model-stem", model_stem, "checkpoint stem (separate | finetuned)");
  eval->add_option("--k", k, "samples per point")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep", "dimension sweep: VBA vs naive Monte Carlo");
  std::vector<std::size_t> dims{1, 2, 4, 8, 16, 32, 64};
  std::size_t repeats = 10, sweep_n = 4000, sweep_n_eval = 256, sweep_epochs = 30,
              sweep_ft_epochs = 15, sweep_k = 256;
  sweep->add_option("--dims", dims, "dimensions to sweep");
  sweep->add_option("--repeats", repeats, "independent generations per dimension")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--n", sweep_n, "training rows per run")->check(CLI::PositiveNumber);
  sweep->add_option("--n-eval", sweep_n_eval, "evaluation rows per run")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--epochs", sweep_epochs, "separate-training epochs");
  sweep->add_option("--finetune-epochs", sweep_ft_epochs, "finetuning epochs");
  sweep->add_option("--k", sweep_k, "per-point sample budget")->check(CLI::PositiveNumber);
  sweep->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
  sweep->add_option("--lr", lr, "learning rate");
  sweep->add_option("--seed", seed, "master seed");
  sweep->add_option("--out", out_path, "output CSV path")->required();

  auto* pitfall = app.add_subcommand("pitfall", "fully-joint vs separate+finetune training");
  std::size_t pit_dim = 1, pit_n = 4000, pit_epochs = 150, pit_sep_epochs = 60;
  pitfall->add_option("--dim", pit_dim, "dimensions")->check(CLI::PositiveNumber);
  pitfall->add_option("--n", pit_n, "training rows")->check(CLI::PositiveNumber);
  pitfall->add_option("--epochs", pit_epochs, "bound-optimization epochs for both modes");
  pitfall->add_option("--separate-epochs", pit_sep_epochs,
                      "separate-training epochs before finetuning");
  pitfall->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
  pitfall->add_option("--k", finetune_k, "encoder samples per point during training")
      ->check(CLI::PositiveNumber);
  pitfall->add_option("--lr", lr, "learning rate");
  pitfall->add_option("--seed", seed, "master seed");
  pitfall->add_option("--out", out_path, "output CSV path")->required();

  auto* discrete = app.add_subcommand("discrete-check",
                                      "exact Bernoulli counterexample: observational vs "
                                      "interventional expected log-likelihood");
  discrete->add_option("--out", out_path, "optional report path");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      fs::create_directories(out_dir);
      const auto config = vba::sample_config(dim, seed);
      vba::io::save_config(config, fs::path(out_dir) / "scm_config.txt");
      const auto obs = vba::generate(config, n, vba::rng::derive(seed, 0x0b5ULL));
      const auto ood = vba::generate_ood(config, n_ood, vba::rng::derive(seed, 0x00dULL));
      vba::io::save_dataset(obs, fs::path(out_dir) / "observational.ds");
      vba::io::save_dataset(ood, fs::path(out_dir) / "ood.ds");
      if (gen_csv) {
        vba::io::export_dataset_csv(obs, fs::path(out_dir) / "observational.csv");
        vba::io::export_dataset_csv(ood, fs::path(out_dir) / "ood.csv");
      }
      return kExitOk;
    }

    if (train->parsed()) {
      fs::create_directories(out_dir);
      const auto ds = vba::io::load_dataset(data_path);
      auto model = vba::make_model(ds.d, vba::rng::derive(seed, 0x1417ULL));
      const auto report = vba::train_separate(model, ds, epochs, batch, seed, lr);
      vba::io::save_model(model, out_dir, "separate");
      write_loss_csv(report, fs::path(out_dir) / "separate_loss.csv");
      return kExitOk;
    }

    if (finetune->parsed()) {
      fs::create_directories(out_dir);
      const auto ds = vba::io::load_dataset(data_path);
      auto model = vba::io::load_model(model_dir, "separate");
      model.freeze_prior = model.freeze_decoder = true;
      const auto report = vba::finetune_encoder(model, ds, epochs, batch, finetune_k, seed, lr);
      vba::io::save_model(model, out_dir, "finetuned");
      write_loss_csv(report, fs::path(out_dir) / "finetune_elbo.csv");
      return kExitOk;
    }

    if (eval->parsed()) {
      fs::create_directories(out_dir);
      const auto config = vba::io::load_config(config_path);
      const auto model = vba::io::load_model(model_dir, model_stem);
      vba::io::CsvWriter csv(fs::path(out_dir) / "eval.csv", kEvalHeader);
      const auto ds = vba::io::load_dataset(data_path);
      const auto met = vba::evaluate(model, ds, config, k, seed, model_stem);
      write_metrics(met, out_dir, "in_distribution");
      csv.row(metrics_cells("in_distribution", met));
      if (!data_ood_path.empty()) {
        const auto ood = vba::io::load_dataset(data_ood_path);
        const auto met_ood = vba::evaluate(model, ood, config, k, seed, model_stem);
        write_metrics(met_ood, out_dir, "out_of_distribution");
        csv.row(metrics_cells("out_of_distribution", met_ood));
      }
      return kExitOk;
    }

    if (sweep->parsed()) {
      vba::io::CsvWriter csv(out_path, {"dim", "repeat", "method", "abs_error"});
      for (std::size_t d : dims) {
        for (std::size_t rep = 0; rep < repeats; ++rep) {
          const std::uint64_t run_seed = vba::rng::derive(seed, d, rep);
          const auto config = vba::sample_config(d, run_seed);
          const auto ds = vba::generate(config, sweep_n, vba::rng::derive(run_seed, 1));
          const auto ev = vba::generate(config, sweep_n_eval, vba::rng::derive(run_seed, 2));
          auto model = vba::make_model(d, vba::rng::derive(run_seed, 3));
          vba::train_separate(model, ds, sweep_epochs, batch, run_seed, lr);
          const auto met_sep =
              vba::evaluate(model, ev, config, sweep_k, vba::rng::derive(run_seed, 4));
          model.freeze_prior = model.freeze_decoder = true;
          vba::finetune_encoder(model, ds, sweep_ft_epochs, batch, 1, run_seed, lr);
          const auto met_ft =
              vba::evaluate(model, ev, config, sweep_k, vba::rng::derive(run_seed, 4));
          const double truth = vba::expected_log_interventional(config, ev);
          csv.row({std::to_string(d), std::to_string(rep), "vba_separate",
                   format_double(met_sep.ground_truth_mae)});
          csv.row({std::to_string(d), std::to_string(rep), "vba_finetuned",
                   format_double(met_ft.ground_truth_mae)});
          csv.row({std::to_string(d), std::to_string(rep), "naive_mc",
                   format_double(std::abs(met_sep.naive_mc_mean - truth))});
        }
      }
      return kExitOk;
    }

    if (pitfall->parsed()) {
      const std::uint64_t run_seed = vba::rng::derive(seed, 0xbadULL);
      const auto config = vba::sample_config(pit_dim, run_seed);
      const auto ds = vba::generate(config, pit_n, vba::rng::derive(run_seed, 1));
      const double analytic_obs = vba::analytic_expected_log_observational(config);
      const double analytic_intv = vba::analytic_expected_log_interventional(config);

      auto joint_model = vba::make_model(pit_dim, vba::rng::derive(run_seed, 2));
      const auto joint_report =
          vba::train_fully_joint(joint_model, ds, pit_epochs, batch, finetune_k, run_seed, lr);

      auto ft_model = vba::make_model(pit_dim, vba::rng::derive(run_seed, 3));
      vba::train_separate(ft_model, ds, pit_sep_epochs, batch, run_seed, lr);
      ft_model.freeze_prior = ft_model.freeze_decoder = true;
      const auto ft_report =
          vba::finetune_encoder(ft_model, ds, pit_epochs, batch, finetune_k, run_seed, lr);

      vba::io::CsvWriter csv(out_path,
                             {"epoch", "fully_joint_elbo", "finetuned_elbo",
                              "analytic_observational", "analytic_interventional"});
      for (std::size_t e = 0; e < pit_epochs; ++e)
        csv.row({std::to_string(e), format_double(joint_report.elbo_curve[e]),
                 format_double(ft_report.elbo_curve[e]), format_double(analytic_obs),
                 format_double(analytic_intv)});
      return kExitOk;
    }

    if (discrete->parsed()) return run_discrete_check(out_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const vba::io::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssertion;
  }
  return kExitUsage;
}
