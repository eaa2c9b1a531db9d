#include <string>

#include <CLI11.hpp>

#include "udig/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"uDiG-DIP reconstruction experiments"};
  app.require_subcommand(1);

  std::string train_config, recon_config, sens_config, results_dir;

  CLI::App* train = app.add_subcommand(
      "train-dm", "Train a diffusion score model on simulated phantoms");
  train->add_option("config", train_config, "JSON config file")->required();

  CLI::App* recon = app.add_subcommand(
      "reconstruct", "Run the reconstruction methods over simulated scans");
  recon->add_option("config", recon_config, "JSON config file")->required();

  CLI::App* figures = app.add_subcommand(
      "figures", "Render figures from an existing results directory");
  figures->add_option("results_dir", results_dir, "Output directory of a reconstruct run")
      ->required();

  CLI::App* sens = app.add_subcommand(
      "sensitivity", "Sweep the input perturbation level for the fixed-input model");
  sens->add_option("config", sens_config, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (train->parsed()) return udig::cmd_train_dm(train_config);
  if (recon->parsed()) return udig::cmd_reconstruct(recon_config);
  if (figures->parsed()) return udig::cmd_figures(results_dir);
  return udig::cmd_sensitivity(sens_config);
}
