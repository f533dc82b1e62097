// Command-line front end. One flat JSON config plus per-flag overrides drive
// five subcommands: synth, train, eval, cv, gradcheck.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "kjdl/cli.hpp"

namespace {

// The config file must be applied before flag binding so that explicit flags
// win over file values; CLI11 parses flags only after options are set up, so
// the config path is pre-scanned from raw argv.
std::string prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" || arg == "-c") {
      if (i + 1 < argc) return argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      return arg.substr(9);
    }
  }
  return {};
}

int run_cli(int argc, char** argv) {
  kjdl::RunConfig cfg;
  const std::string config_path = prescan_config_path(argc, argv);
  try {
    if (!config_path.empty()) cfg = kjdl::load_run_config(config_path);
  } catch (const kjdl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"kernelized joint-sparsity dictionary learning for "
               "hyperspectral pixel-neighborhood classification"};
  app.require_subcommand(1);
  std::string config_opt;  // value already applied by the prescan
  app.add_option("--config,-c", config_opt, "JSON config file (flags override it)");
  std::string dump_path;
  app.add_option("--dump-config", dump_path,
                 "write the effective config (defaults + file + flags) as JSON");

  app.add_option("--method", cfg.method,
                 "pipeline tag {sdl|src}-{l1|l12}-{l|k}")->capture_default_str();
  app.add_option("--cube", cfg.cube_path, "hyperspectral cube (.kjhc)");
  app.add_option("--labels", cfg.labels_path, "label map (.kjhl)");
  app.add_option("--band-drop", cfg.band_drop, "band indices to discard on load");
  app.add_option("--train-fraction", cfg.train_fraction,
                 "labeled fraction used for training")->capture_default_str();
  app.add_option("--seed", cfg.seed, "master seed")->capture_default_str();

  app.add_option("--lambda1", cfg.lambda1, "sparsity weight")->capture_default_str();
  app.add_option("--lambda2", cfg.lambda2, "ridge weight on codes")->capture_default_str();
  app.add_option("--nu", cfg.nu, "classifier ridge weight")->capture_default_str();
  app.add_option("--rho", cfg.rho, "base learning rate")->capture_default_str();
  app.add_option("--t0", cfg.t0, "learning-rate knee (<=0: T/10)")->capture_default_str();
  app.add_option("--iterations,-T", cfg.T,
                 "refinement iterations (<0: 20x training size)")->capture_default_str();
  app.add_option("--neighborhood,-S", cfg.S,
                 "pixels coded jointly per sample")->capture_default_str();
  app.add_option("--kernel,-k", cfg.kernel_kind,
                 "kernel kind: linear | gaussian | polynomial")->capture_default_str();
  app.add_option("--sigma", cfg.sigma, "Gaussian kernel width")->capture_default_str();
  app.add_option("--degree", cfg.degree, "polynomial kernel degree")->capture_default_str();
  app.add_option("--atoms-per-class", cfg.atoms_per_class,
                 "dictionary atoms per class when -d is 0")->capture_default_str();
  app.add_option("--atoms,-d", cfg.d,
                 "dictionary size (0: atoms-per-class x classes)")->capture_default_str();
  app.add_option("--unsup-iterations", cfg.unsup_T,
                 "dictionary warm-up iterations")->capture_default_str();

  app.add_option("--max-iters", cfg.max_iters, "coder iteration cap")->capture_default_str();
  app.add_option("--kkt-tol", cfg.kkt_tol, "coder optimality tolerance")->capture_default_str();
  app.add_option("--active-tol", cfg.active_tol,
                 "row norm below which a code row counts as inactive")->capture_default_str();
  app.add_flag("--polish,!--no-polish", cfg.polish,
               "finish coding with a support-restricted Newton step");

  app.add_option("--model-out", cfg.model_out, "trained model path")->capture_default_str();
  app.add_option("--init-model-out", cfg.init_model_out,
                 "also save the pre-refinement model");
  app.add_option("--log-out", cfg.log_out, "per-iteration training log (CSV)");
  app.add_option("--model", cfg.model_in, "model to evaluate (.kjdl)");
  app.add_option("--pred-out", cfg.pred_out, "per-sample predictions (CSV)");
  app.add_option("--report-out", cfg.report_out, "accuracy report (JSON)");

  app.add_option("--cv-folds", cfg.cv_folds, "cross-validation folds")->capture_default_str();
  app.add_option("--cv-iterations", cfg.cv_T,
                 "refinement iterations per fold")->capture_default_str();
  app.add_option("--cv-lambda1", cfg.cv_lambda1, "sparsity grid");
  app.add_option("--cv-nu", cfg.cv_nu, "classifier ridge grid");
  app.add_option("--cv-sigma", cfg.cv_sigma, "Gaussian width grid");
  app.add_option("--cv-out", cfg.cv_out, "grid results (JSON)");

  app.add_option("--synth-classes", cfg.synth_classes,
                 "classes in the synthetic scene")->capture_default_str();
  app.add_option("--synth-bands", cfg.synth_bands,
                 "spectral bands in the synthetic scene")->capture_default_str();
  app.add_option("--pixels-per-class", cfg.pixels_per_class,
                 "labeled pixels per class")->capture_default_str();
  app.add_option("--noise-sigma", cfg.noise_sigma,
                 "per-band noise level")->capture_default_str();
  app.add_option("--layout", cfg.layout, "stripes | blocks")->capture_default_str();
  app.add_option("--cube-out", cfg.cube_out, "synthetic cube path")->capture_default_str();
  app.add_option("--labels-out", cfg.labels_out, "synthetic labels path")->capture_default_str();

  app.add_option("--trials", cfg.trials, "gradient audit trials")->capture_default_str();
  app.add_option("--tol", cfg.tol, "gradient audit tolerance")->capture_default_str();
  app.add_option("--fd-step", cfg.fd_step,
                 "finite-difference step size")->capture_default_str();
  app.add_flag("--corrupt-sign", cfg.corrupt_sign,
               "negative control: flip one gradient entry before the audit");

  CLI::App* sub_train = app.add_subcommand("train", "fit a model on the training split");
  CLI::App* sub_eval = app.add_subcommand("eval", "score a method on the test split");
  CLI::App* sub_cv = app.add_subcommand("cv", "grid search by cross validation");
  CLI::App* sub_synth = app.add_subcommand("synth", "generate a synthetic labeled scene");
  CLI::App* sub_gradcheck =
      app.add_subcommand("gradcheck", "finite-difference audit of the training gradients");
  for (CLI::App* sub : {sub_train, sub_eval, sub_cv, sub_synth, sub_gradcheck})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!dump_path.empty()) {
      std::ofstream os(dump_path);
      if (!os) throw kjdl::IoError("cannot open " + dump_path);
      os << kjdl::run_config_to_json(cfg).dump(2) << '\n';
    }
    if (app.got_subcommand(sub_train)) return kjdl::run_train(cfg, std::cout);
    if (app.got_subcommand(sub_eval)) return kjdl::run_eval(cfg, std::cout);
    if (app.got_subcommand(sub_cv)) return kjdl::run_cv(cfg, std::cout);
    if (app.got_subcommand(sub_synth)) return kjdl::run_synth(cfg, std::cout);
    if (app.got_subcommand(sub_gradcheck)) return kjdl::run_gradcheck_cmd(cfg, std::cout);
  } catch (const kjdl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const kjdl::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const kjdl::InvalidInput& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const kjdl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
