#include "flatdiv/presets.hpp"

#include "flatdiv/config.hpp"

namespace flatdiv {

namespace {
using Assignments = std::vector<std::pair<std::string, std::string>>;
}

std::vector<std::string> preset_names() {
  return {"fig1b", "fig2", "fig6", "fig8", "smoke", "fig1c", "sharpbal", "train3"};
}

std::vector<std::pair<std::string, std::string>> preset_assignments(const std::string& name) {
  // theory-curve: analytic trade-off curves (SharpBalance vs SAM)
  if (name == "fig1b")
    return Assignments{
        {"theory.n_tr", "3000"},  {"theory.d_in", "150"},
        {"theory.k", "8"},        {"theory.eta", "0.005"},
        {"theory.sigma", "1"},    {"theory.theta_star_norm", "1"},
        {"theory.rho0", "0.05"},  {"theory.S", "10"},
        {"theory.rho_grid", "0.3, 0.32, 0.34, 0.36, 0.38, 0.4, 0.42, 0.44, 0.46, 0.48, 0.5"},
    };
  // verify: Theorem 1 single-panel run (main-text figure)
  if (name == "fig2")
    return Assignments{
        {"verify.k_grid", "2"},
        {"verify.eta_grid", "0.1"},
        {"verify.rho_grid", "0.3, 0.35, 0.4, 0.45, 0.5"},
    };
  // verify: Theorem 1 appendix grid
  if (name == "fig6")
    return Assignments{
        {"verify.k_grid", "2, 4, 8"},
        {"verify.eta_grid", "0.01, 0.05, 0.1"},
        {"verify.rho_grid", "0.3, 0.4, 0.5"},
    };
  // verify: Theorem 2 appendix grid (subset training)
  if (name == "fig8")
    return Assignments{
        {"verify.S", "10"},
        {"verify.k_grid", "4, 8, 12"},
        {"verify.eta_grid", "0.1, 0.3, 0.5"},
        {"verify.rho_grid", "0.3, 0.4, 0.5"},
    };
  // verify: one cheap cell
  if (name == "smoke")
    return Assignments{
        {"verify.k_grid", "2"},     {"verify.eta_grid", "0.1"}, {"verify.rho_grid", "0.4"},
        {"verify.n_data", "10"},    {"verify.n_init", "10"},
    };
  // train: rho sweep, the toy trade-off table
  if (name == "fig1c")
    return Assignments{
        {"train.mode", "rho_sweep"},
        {"train.rho_grid", "0, 0.01, 0.05, 0.1, 0.2, 0.3"},
        {"train.sweeps", "5"},
    };
  // train: paired SAM vs SharpBalance comparison
  if (name == "sharpbal")
    return Assignments{
        {"train.mode", "paired"},
        {"train.pairs", "5"},
    };
  // train: three-ensemble averaging at defaults
  if (name == "train3")
    return Assignments{
        {"train.mode", "single"},
        {"train.ensembles", "3"},
    };
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace flatdiv
