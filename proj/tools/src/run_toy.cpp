#include <cmath>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/model_zoo.hpp"
#include "scenarios.hpp"

namespace patchlab::tools {

Json toy_defaults() {
  return Json{{"scenario", "toy"},
              {"seed", 0},
              {"grid_min", -5.0},
              {"grid_max", 5.0},
              {"grid_step", 0.5},
              {"rotated", true},
              {"tolerance", 1e-12}};
}

namespace {

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("toy: invalid grid");
  std::vector<double> g;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) g.push_back(lo + step * static_cast<double>(i));
  return g;
}

Vector unit(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v.normalized();
}

}  // namespace

ScenarioResult run_toy(const Json& config, OutputDir& out) {
  const auto grid = make_grid(config.at("grid_min").get<double>(),
                              config.at("grid_max").get<double>(),
                              config.at("grid_step").get<double>());
  const double tol = config.at("tolerance").get<double>();
  const ToyNet net = ToyNet::canonical();
  const Vector e1 = unit({1, 0, 0});
  const Vector e2 = unit({0, 1, 0});
  const Vector e3 = unit({0, 0, 1});
  const Vector illusory = unit({1, 1, 0});

  ScenarioResult res;
  double worst = 0.0;
  std::ostringstream csv;
  csv << "x,x_prime,no_patch,e3_patch,illusory_patch,e1_patch,e2_patch\n";
  for (double x : grid) {
    for (double xp : grid) {
      const Vector hb = toy_forward(net, x).hidden;
      const Vector hs = toy_forward(net, xp).hidden;
      const double none = toy_forward(net, x).output;
      const double p3 = toy_readout(net, patch_1d(hb, hs, e3));
      const double pi = toy_readout(net, patch_1d(hb, hs, illusory));
      const double p1 = toy_readout(net, patch_1d(hb, hs, e1));
      const double p2 = toy_readout(net, patch_1d(hb, hs, e2));
      for (double err : {std::abs(none - x), std::abs(p3 - xp), std::abs(pi - xp),
                         std::abs(p1 - x), std::abs(p2 - x)}) {
        worst = std::max(worst, err);
      }
      csv << format_real(x) << ',' << format_real(xp) << ',' << format_real(none)
          << ',' << format_real(p3) << ',' << format_real(pi) << ','
          << format_real(p1) << ',' << format_real(p2) << '\n';
    }
  }
  out.write("toy_table.csv", csv.str());
  check(res, worst < tol,
        "toy: closed-form mismatch, max error " + format_real(worst));
  res.summary["toy_max_error"] = worst;

  if (config.at("rotated").get<bool>()) {
    const RotatedToyNet rot = RotatedToyNet::canonical();
    // In rotated coordinates d1 copies the input, d2 is disconnected and d3
    // is dormant, so the standard basis of h' replays the roles of e3, e1, e2.
    const Vector d1 = unit({1, 0, 0});
    const Vector d2 = unit({0, 1, 0});
    const Vector d3 = unit({0, 0, 1});
    double rworst = 0.0;
    std::ostringstream rcsv;
    rcsv << "x,x_prime,no_patch,d1_patch,d2_patch,d3_patch\n";
    for (double x : grid) {
      for (double xp : grid) {
        const ToyForward fb = rotated_toy_forward(rot, x);
        const Vector hs = rotated_toy_forward(rot, xp).hidden;
        const double p1 = rotated_toy_readout(rot, patch_1d(fb.hidden, hs, d1));
        const double p2 = rotated_toy_readout(rot, patch_1d(fb.hidden, hs, d2));
        const double p3 = rotated_toy_readout(rot, patch_1d(fb.hidden, hs, d3));
        for (double err : {std::abs(fb.output - x), std::abs(p1 - xp),
                           std::abs(p2 - x), std::abs(p3 - x)}) {
          rworst = std::max(rworst, err);
        }
        rcsv << format_real(x) << ',' << format_real(xp) << ','
             << format_real(fb.output) << ',' << format_real(p1) << ','
             << format_real(p2) << ',' << format_real(p3) << '\n';
      }
    }
    out.write("rotated_table.csv", rcsv.str());
    check(res, rworst < tol,
          "toy: rotated-basis mismatch, max error " + format_real(rworst));
    res.summary["rotated_max_error"] = rworst;
  }
  return res;
}

}  // namespace patchlab::tools
