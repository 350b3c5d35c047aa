#include <cmath>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/illusion.hpp"
#include "scenarios.hpp"

namespace patchlab::tools {

Json illusion_synth_defaults() {
  DasConfig das;
  return Json{{"scenario", "illusion-synth"},
              {"seed", 11},
              {"model", to_json(SyntheticModelConfig{})},
              {"das", to_json(das)},
              {"pair_count", 512},
              {"eval_pair_count", 256},
              {"sites", {"mlp_post_act", "resid_pre"}}};
}

namespace {

void table_row(std::ostringstream& os, Site site, const char* name, double norm,
               const std::optional<PatchRow>& row) {
  os << to_string(site) << ',' << name << ',' << format_real(norm) << ',';
  if (!row) {
    os << ",,,,\n";
    return;
  }
  os << format_real(row->fldd.mean) << ',' << format_real(row->fldd.median) << ','
     << row->fldd.used << ',' << row->fldd.excluded << ','
     << format_real(row->interchange_acc) << '\n';
}

void write_spread(OutputDir& out, const std::string& name,
                  const std::optional<ProjectionSpread>& spread) {
  if (!spread) return;
  std::ostringstream os;
  write_spread_csv(os, *spread);
  out.write(name, os.str());
}

}  // namespace

ScenarioResult run_illusion_synth(const Json& config, OutputDir& out) {
  const auto seed = config.at("seed").get<std::uint64_t>();
  const Index pair_count = config.at("pair_count").get<Index>();
  const Index eval_count = config.at("eval_pair_count").get<Index>();
  if (pair_count < 1 || eval_count < 1) {
    throw ConfigError("illusion-synth: pair_count and eval_pair_count must be >= 1");
  }
  const SyntheticPathwayModel model =
      build_synthetic_model(model_config_from_json(config.at("model")));
  const DasConfig base_das = das_config_from_json(config.at("das"));
  const auto train = make_training_pairs(model, pair_count, seed,
                                         base_das.objective_sign_rule);
  const auto eval = make_interchange_pairs(model, eval_count, seed + 1);

  ScenarioResult res;
  std::ostringstream table;
  table << "site,intervention,component_norm,fldd_mean,fldd_median,used,excluded,"
           "interchange_acc\n";
  Json reports = Json::object();
  for (const auto& site_name : config.at("sites")) {
    const Site site = parse_site(site_name.get<std::string>());
    DasConfig das = base_das;
    das.site = site;
    const DasResult trained = das_train(model, train, das);
    const Vector v = trained.basis.col(0);
    const IllusionReport rep = analyze_direction(model, v, site, eval);
    const std::string tag(to_string(site));

    table_row(table, site, "v", 1.0, rep.v);
    table_row(table, site, "row", rep.norm_row, rep.row);
    table_row(table, site, "null", rep.norm_null, rep.null);
    table_row(table, site, "full_component", 1.0, rep.full_component);
    write_spread(out, "spread_" + tag + "_null.csv", rep.spread_null);
    write_spread(out, "spread_" + tag + "_row.csv", rep.spread_row);
    std::ostringstream trace;
    write_trace_csv(trace, trained.trace);
    out.write("das_trace_" + tag + ".csv", trace.str());

    Json j = to_json(rep);
    j["das"] = Json{{"initial_mean_loss", trained.initial_mean_loss},
                    {"final_mean_loss", trained.final_mean_loss}};
    j["direction"] = vector_to_json(v);

    const double fv = rep.v.fldd.mean;
    if (site == Site::kMlpPostAct) {
      check(res, fv >= 0.8, tag + ": fldd_v " + format_real(fv) + " < 0.8");
      check(res, rep.row && rep.row->fldd.mean <= 0.25 * fv,
            tag + ": fldd_row exceeds 25% of fldd_v");
      check(res, rep.null && std::abs(rep.null->fldd.mean) < 1e-6,
            tag + ": nullspace patch is not inert");
      check(res, std::abs(rep.full_component.fldd.mean) < 0.15,
            tag + ": full-component |fldd| >= 0.15");
      check(res, rep.norm_null >= 0.3, tag + ": nullspace norm < 0.3");
    } else {
      const double cos_feat = std::abs(v.dot(model.v_feat));
      j["abs_cos_v_feat"] = cos_feat;
      check(res, cos_feat >= 0.9, tag + ": |cos(v, v_feat)| < 0.9");
      check(res, rep.row && rep.row->fldd.mean >= 0.75 * fv,
            tag + ": rowspace-analogue patch retains < 75% of fldd_v");
    }
    reports[tag] = j;
  }
  out.write("illusion_table.csv", table.str());
  out.write_json("illusion_report.json", reports);
  res.summary["sites"] = reports.size();
  return res;
}

}  // namespace patchlab::tools
