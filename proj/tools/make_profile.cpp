// Writes a synthetic scenario profile (double-peak load, solar bell, evening
// price peak) to a CSV file.

#include <iostream>

#include <CLI11.hpp>

#include "gridcoop/errors.hpp"
#include "gridcoop/scenario.hpp"

int main(int argc, char** argv) {
  using namespace gridcoop;
  CLI::App app{"Generate a synthetic scenario profile"};
  scenario::SyntheticSpec s;
  std::uint64_t seed = 1;
  std::string out;
  app.add_option("--out", out, "output CSV")->required();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--mgs", s.mgs)->capture_default_str();
  app.add_option("--days", s.days)->capture_default_str();
  app.add_option("--dt", s.dt_h, "step length, h")->capture_default_str();
  app.add_option("--load-mean", s.load_mean_kw, "mean load, kW (one value or one per MG)");
  app.add_option("--load-morning", s.load_morning)->capture_default_str();
  app.add_option("--load-evening", s.load_evening)->capture_default_str();
  app.add_option("--load-noise", s.load_noise)->capture_default_str();
  app.add_option("--sunrise", s.sunrise_h)->capture_default_str();
  app.add_option("--sunset", s.sunset_h)->capture_default_str();
  app.add_option("--irradiance-peak", s.irradiance_peak)->capture_default_str();
  app.add_option("--irradiance-noise", s.irradiance_noise)->capture_default_str();
  app.add_option("--price-base", s.price_base)->capture_default_str();
  app.add_option("--price-peak", s.price_peak)->capture_default_str();
  app.add_option("--price-peak-hour", s.price_peak_hour)->capture_default_str();
  app.add_option("--price-noise", s.price_noise)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    scenario::save_profiles(scenario::generate_synthetic(s, seed), out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
