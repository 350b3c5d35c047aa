#include "patchlab/serialization.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

#include "patchlab/error.hpp"

namespace patchlab {

void require_keys(const Json& j, std::initializer_list<const char*> allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
      return item.key() == k;
    });
    if (!known) throw ConfigError(context + ": unknown key '" + item.key() + "'");
  }
}

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& context) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(context + ": field '" + key + "' has the wrong type");
  }
}

const Json& need(const Json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) throw ConfigError(context + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const Json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + ": expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(context + ": non-numeric entry");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + ": expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const Vector first = vector_from_json(j[0], context);
  Matrix m(static_cast<Index>(j.size()), first.size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from_json(j[r], context);
    if (row.size() != first.size()) throw ConfigError(context + ": ragged matrix");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

Json to_json(const SyntheticModelConfig& c) {
  return Json{{"seed", c.seed},
              {"d_resid", c.d_resid},
              {"d_mlp", c.d_mlp},
              {"c", c.c},
              {"noise_scale", c.noise_scale},
              {"target_output_norm", c.target_output_norm},
              {"mu_scale", c.mu_scale}};
}

SyntheticModelConfig model_config_from_json(const Json& j) {
  const std::string ctx = "model config";
  require_keys(j, {"seed", "d_resid", "d_mlp", "c", "noise_scale",
                   "target_output_norm", "mu_scale"}, ctx);
  SyntheticModelConfig c;
  c.seed = get_or(j, "seed", c.seed, ctx);
  c.d_resid = get_or(j, "d_resid", c.d_resid, ctx);
  c.d_mlp = get_or(j, "d_mlp", c.d_mlp, ctx);
  c.c = get_or(j, "c", c.c, ctx);
  c.noise_scale = get_or(j, "noise_scale", c.noise_scale, ctx);
  c.target_output_norm = get_or(j, "target_output_norm", c.target_output_norm, ctx);
  c.mu_scale = get_or(j, "mu_scale", c.mu_scale, ctx);
  validate(c);
  return c;
}

Json to_json(const SyntheticPathwayModel& m) {
  return Json{{"d_resid", m.d_resid},
              {"mlp",
               {{"W_in", matrix_to_json(m.mlp.w_in)},
                {"b_in", vector_to_json(m.mlp.b_in)},
                {"W_out", matrix_to_json(m.mlp.w_out)},
                {"b_out", vector_to_json(m.mlp.b_out)}}},
              {"mu", vector_to_json(m.mu)},
              {"v_feat", vector_to_json(m.v_feat)},
              {"c", m.c},
              {"noise_scale", m.noise_scale},
              {"unembed", matrix_to_json(m.unembed)}};
}

SyntheticPathwayModel model_from_json(const Json& j) {
  const std::string ctx = "model";
  require_keys(j, {"d_resid", "mlp", "mu", "v_feat", "c", "noise_scale", "unembed"}, ctx);
  SyntheticPathwayModel m;
  m.d_resid = need(j, "d_resid", ctx).get<Index>();
  const Json& mlp = need(j, "mlp", ctx);
  require_keys(mlp, {"W_in", "b_in", "W_out", "b_out"}, "model.mlp");
  m.mlp.w_in = matrix_from_json(need(mlp, "W_in", ctx), "model.mlp.W_in");
  m.mlp.b_in = vector_from_json(need(mlp, "b_in", ctx), "model.mlp.b_in");
  m.mlp.w_out = matrix_from_json(need(mlp, "W_out", ctx), "model.mlp.W_out");
  m.mlp.b_out = vector_from_json(need(mlp, "b_out", ctx), "model.mlp.b_out");
  m.mu = vector_from_json(need(j, "mu", ctx), "model.mu");
  m.v_feat = vector_from_json(need(j, "v_feat", ctx), "model.v_feat");
  m.c = need(j, "c", ctx).get<double>();
  m.noise_scale = need(j, "noise_scale", ctx).get<double>();
  m.unembed = matrix_from_json(need(j, "unembed", ctx), "model.unembed");
  validate(m);
  return m;
}

Json to_json(const InterventionSpec& s) {
  Json j{{"site", std::string(to_string(s.site))}};
  std::visit(
      [&](const auto& kind) {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, FullReplace>) {
          j["kind"] = "full_replace";
          j["value"] = vector_to_json(kind.value);
        } else if constexpr (std::is_same_v<T, SubspacePatch>) {
          j["kind"] = "subspace_patch";
          j["basis"] = matrix_to_json(kind.basis);
          j["source_activation"] = vector_to_json(kind.source_activation);
        } else if constexpr (std::is_same_v<T, ZeroSubspace>) {
          j["kind"] = "zero_subspace";
          j["v"] = vector_to_json(kind.v);
          j["unit_constrained"] = kind.unit_constrained;
        } else {
          j["kind"] = "rank1_edit";
          j["a"] = vector_to_json(kind.a);
          j["b"] = vector_to_json(kind.b);
        }
      },
      s.kind);
  return j;
}

InterventionSpec intervention_from_json(const Json& j) {
  const std::string ctx = "intervention";
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
  InterventionSpec s;
  s.site = parse_site(need(j, "site", ctx).get<std::string>());
  const std::string kind = need(j, "kind", ctx).get<std::string>();
  if (kind == "full_replace") {
    require_keys(j, {"site", "kind", "value"}, ctx);
    s.kind = FullReplace{vector_from_json(need(j, "value", ctx), ctx + ".value")};
  } else if (kind == "subspace_patch") {
    require_keys(j, {"site", "kind", "basis", "source_activation"}, ctx);
    s.kind = SubspacePatch{matrix_from_json(need(j, "basis", ctx), ctx + ".basis"),
                           vector_from_json(need(j, "source_activation", ctx),
                                            ctx + ".source_activation")};
  } else if (kind == "zero_subspace") {
    require_keys(j, {"site", "kind", "v", "unit_constrained"}, ctx);
    s.kind = ZeroSubspace{vector_from_json(need(j, "v", ctx), ctx + ".v"),
                          get_or(j, "unit_constrained", false, ctx)};
  } else if (kind == "rank1_edit") {
    require_keys(j, {"site", "kind", "a", "b"}, ctx);
    s.kind = Rank1Edit{vector_from_json(need(j, "a", ctx), ctx + ".a"),
                       vector_from_json(need(j, "b", ctx), ctx + ".b")};
  } else {
    throw ConfigError(ctx + ": unknown kind '" + kind + "'");
  }
  validate(s);
  return s;
}

namespace {

const char* objective_name(Objective o) {
  return o == Objective::kMaximize ? "maximize" : "minimize";
}

Objective parse_objective(const std::string& s) {
  if (s == "maximize") return Objective::kMaximize;
  if (s == "minimize") return Objective::kMinimize;
  throw ConfigError("das: unknown objective '" + s + "'");
}

}  // namespace

Json to_json(const DasConfig& c) {
  return Json{{"subspace_dim", c.subspace_dim},
              {"learning_rate", c.learning_rate},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"site", std::string(to_string(c.site))},
              {"objective_sign_rule",
               {{"same_label", objective_name(c.objective_sign_rule.same_label)},
                {"opposite_label",
                 objective_name(c.objective_sign_rule.opposite_label)}}}};
}

DasConfig das_config_from_json(const Json& j) {
  const std::string ctx = "das config";
  require_keys(j, {"subspace_dim", "learning_rate", "steps", "batch_size", "seed",
                   "site", "objective_sign_rule"}, ctx);
  DasConfig c;
  c.subspace_dim = get_or(j, "subspace_dim", c.subspace_dim, ctx);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate, ctx);
  c.steps = get_or(j, "steps", c.steps, ctx);
  c.batch_size = get_or(j, "batch_size", c.batch_size, ctx);
  c.seed = get_or(j, "seed", c.seed, ctx);
  if (j.contains("site")) c.site = parse_site(get_or(j, "site", std::string(), ctx));
  if (j.contains("objective_sign_rule")) {
    const Json& r = j.at("objective_sign_rule");
    require_keys(r, {"same_label", "opposite_label"}, ctx + ".objective_sign_rule");
    if (r.contains("same_label")) {
      c.objective_sign_rule.same_label = parse_objective(r.at("same_label").get<std::string>());
    }
    if (r.contains("opposite_label")) {
      c.objective_sign_rule.opposite_label =
          parse_objective(r.at("opposite_label").get<std::string>());
    }
  }
  validate(c);
  return c;
}

Json to_json(const FlddSummary& s) {
  return Json{{"mean", s.mean}, {"median", s.median}, {"used", s.used},
              {"excluded", s.excluded}};
}

Json to_json(const ProjectionSpread& s) {
  Json classes = Json::array();
  for (const auto& c : s.classes) {
    classes.push_back(Json{{"label", c.label}, {"mean", c.mean},
                           {"stddev", c.stddev}, {"count", c.count}});
  }
  return Json{{"classes", classes}};
}

namespace {

Json row_json(const std::optional<PatchRow>& row) {
  if (!row) return Json{{"present", false}};
  return Json{{"present", true}, {"fldd", to_json(row->fldd)},
              {"interchange_acc", row->interchange_acc}};
}

}  // namespace

Json to_json(const IllusionReport& r) {
  Json j{{"site", std::string(to_string(r.site))},
         {"norm_null", r.norm_null},
         {"norm_row", r.norm_row},
         {"v", row_json(r.v)},
         {"row", row_json(r.row)},
         {"null", row_json(r.null)},
         {"full_component", row_json(r.full_component)}};
  j["spread_null"] = r.spread_null ? to_json(*r.spread_null) : Json(nullptr);
  j["spread_row"] = r.spread_row ? to_json(*r.spread_row) : Json(nullptr);
  return j;
}

Json to_json(const SubspaceApproxResult& r) {
  Json curve = Json::array();
  for (const auto& p : r.curve) {
    curve.push_back(Json{{"alpha_sq", p.alpha_sq}, {"reduced", p.reduced},
                         {"full", p.full},
                         {"constraint_violation", p.constraint_violation}});
  }
  return Json{{"v", vector_to_json(r.v)},
              {"alpha", r.alpha},
              {"objective_value", r.objective_value},
              {"constraint_violation", r.constraint_violation},
              {"curve", curve}};
}

Json to_json(const RegressionFit& f) {
  return Json{{"slope", f.slope}, {"intercept", f.intercept},
              {"r_squared", f.r_squared}, {"n", f.n}};
}

Json to_json(const HeldOutFit& f) {
  return Json{{"r_squared", f.r_squared}, {"train_r_squared", f.train_r_squared},
              {"n_train", f.n_train}, {"n_test", f.n_test}};
}

Json to_json(const LemmaCheck& c) {
  return Json{{"n", c.n},
              {"support_size", c.support_size},
              {"alpha_sum", c.alpha_sum},
              {"original_gap", c.original_gap},
              {"transferred_gap", c.transferred_gap},
              {"lambda", c.lambda},
              {"bias", c.bias},
              {"correct", c.correct},
              {"all_correct", c.all_correct}};
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace patchlab
