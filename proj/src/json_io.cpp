#include "rvar/json_io.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace rvar {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// JSON has no NaN; emit null instead.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

const json& need(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw std::invalid_argument(ctx + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix: expected a nonempty array of rows");
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!j.at(i).is_array() || static_cast<Eigen::Index>(j.at(i).size()) != c)
      throw std::invalid_argument("matrix: ragged rows");
    for (Eigen::Index k = 0; k < c; ++k) M(i, k) = j.at(i).at(k).get<double>();
  }
  return M;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

// ---------------------------------------------------------------------------

json pattern_to_json(const RestrictionPattern& p) {
  return std::visit(
      overloaded{
          [](const Unrestricted& x) { return json{{"kind", "unrestricted"}, {"d", x.d}}; },
          [](const Banded& x) { return json{{"kind", "banded"}, {"d", x.d}, {"k0", x.k0}}; },
          [](const Network& x) {
            json adj = json::array();
            for (Eigen::Index i = 0; i < x.adjacency.rows(); ++i) {
              json row = json::array();
              for (Eigen::Index k = 0; k < x.adjacency.cols(); ++k) row.push_back(x.adjacency(i, k));
              adj.push_back(std::move(row));
            }
            return json{{"kind", "network"}, {"d", x.d}, {"adjacency", adj}};
          },
          [](const Grouped& x) { return json{{"kind", "grouped"}, {"d", x.d}, {"K", x.K}}; },
          [](const ScaledIdentity& x) { return json{{"kind", "scaled_identity"}, {"d", x.d}}; },
          [](const CompanionVarP& x) {
            json out{{"kind", "companion"}, {"d0", x.d0}, {"p", x.p}};
            if (x.inner) out["inner"] = pattern_to_json(*x.inner);
            return out;
          },
          [](const Custom& x) {
            json fixed = json::array();
            for (const auto& [idx, val] : x.fixed) fixed.push_back(json::array({idx, val}));
            return json{{"kind", "custom"}, {"q", x.q == 0 ? x.d : x.q}, {"d", x.d},
                        {"zeros", x.zeros},  {"equal", x.equal},         {"fixed", fixed}};
          },
      },
      p.kind);
}

RestrictionPattern pattern_from_json(const json& j) {
  const std::string kind = need(j, "kind", "pattern").get<std::string>();
  const std::string ctx = "pattern '" + kind + "'";
  RestrictionPattern out;
  if (kind == "unrestricted") {
    out = Unrestricted{need(j, "d", ctx).get<int>()};
  } else if (kind == "banded") {
    out = Banded{need(j, "d", ctx).get<int>(), need(j, "k0", ctx).get<int>()};
  } else if (kind == "network") {
    Network n;
    n.d = need(j, "d", ctx).get<int>();
    const json& adj = need(j, "adjacency", ctx);
    n.adjacency.resize(n.d, n.d);
    if (static_cast<int>(adj.size()) != n.d) throw std::invalid_argument(ctx + ": adjacency must be d x d");
    for (int r = 0; r < n.d; ++r) {
      if (static_cast<int>(adj.at(r).size()) != n.d) throw std::invalid_argument(ctx + ": adjacency must be d x d");
      for (int c = 0; c < n.d; ++c) n.adjacency(r, c) = adj.at(r).at(c).is_boolean() ? adj.at(r).at(c).get<bool>() : adj.at(r).at(c).get<int>();
    }
    out = std::move(n);
  } else if (kind == "grouped") {
    out = Grouped{need(j, "d", ctx).get<int>(), need(j, "K", ctx).get<int>()};
  } else if (kind == "scaled_identity") {
    out = ScaledIdentity{need(j, "d", ctx).get<int>()};
  } else if (kind == "companion") {
    CompanionVarP c;
    c.d0 = need(j, "d0", ctx).get<int>();
    c.p = need(j, "p", ctx).get<int>();
    if (j.contains("inner")) c.inner = std::make_shared<const RestrictionPattern>(pattern_from_json(j.at("inner")));
    out = std::move(c);
  } else if (kind == "custom") {
    Custom c;
    c.d = need(j, "d", ctx).get<int>();
    c.q = j.value("q", c.d);
    if (j.contains("zeros")) c.zeros = j.at("zeros").get<std::vector<int>>();
    if (j.contains("equal")) c.equal = j.at("equal").get<std::vector<std::vector<int>>>();
    if (j.contains("fixed"))
      for (const auto& f : j.at("fixed")) c.fixed.emplace_back(f.at(0).get<int>(), f.at(1).get<double>());
    out = std::move(c);
  } else if (kind == "sparse_offdiagonal") {
    out = sparse_offdiagonal_pattern(need(j, "d", ctx).get<int>(), need(j, "count", ctx).get<int>(),
                                     j.value("seed", std::uint64_t{1}));
  } else {
    throw std::invalid_argument("pattern: unknown kind '" + kind + "'");
  }
  validate(out);
  return out;
}

// ---------------------------------------------------------------------------

json law_to_json(const InnovationLaw& law) {
  if (const auto* t = std::get_if<StudentTLaw>(&law)) return json{{"student_t", t->dof}};
  return "normal";
}

InnovationLaw law_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "normal") return NormalLaw{};
    if (j.get<std::string>() == "student_t") return StudentTLaw{};
  } else if (j.is_object() && j.contains("student_t")) {
    return StudentTLaw{j.at("student_t").get<double>()};
  }
  throw std::invalid_argument("law: expected \"normal\", \"student_t\" or {\"student_t\": dof}");
}

json dgp_to_json(const DgpSpec& s) {
  json out{{"which", s.which}, {"d", s.d}, {"rho", s.rho}};
  if (s.which == 1) out["k0"] = s.k0;
  if (s.which == 2) out["K"] = s.K;
  return out;
}

DgpSpec dgp_from_json(const json& j) {
  DgpSpec s;
  s.which = need(j, "which", "dgp").get<int>();
  s.d = need(j, "d", "dgp").get<int>();
  s.rho = need(j, "rho", "dgp").get<double>();
  s.k0 = j.value("k0", s.k0);
  s.K = j.value("K", s.K);
  return s;
}

VarModel model_from_json(const json& j, std::uint64_t default_seed) {
  const double sigma2 = j.value("sigma2", 1.0);
  const InnovationLaw law = j.contains("law") ? law_from_json(j.at("law")) : InnovationLaw{NormalLaw{}};
  Eigen::MatrixXd A;
  if (j.contains("A")) {
    A = matrix_from_json(j.at("A"));
  } else if (j.contains("dgp")) {
    A = make_dgp(dgp_from_json(j.at("dgp")), j.value("dgp_seed", default_seed)).A;
  } else {
    throw std::invalid_argument("model: need either 'A' or 'dgp'");
  }
  return VarModel(std::move(A), sigma2, law, j.value("noise_dim", -1));
}

json model_to_json(const VarModel& m) {
  json out{{"A", matrix_to_json(m.A)}, {"sigma2", m.sigma2}, {"law", law_to_json(m.law)}};
  if (m.noise_dim >= 0) out["noise_dim"] = m.noise_dim;
  return out;
}

json fit_to_json(const FitResult& fit) {
  return json{{"theta_hat", vector_to_json(fit.theta_hat)},
              {"beta_hat", vector_to_json(fit.beta_hat)},
              {"A_hat", matrix_to_json(fit.A_hat)},
              {"rank_flag", fit.rank_flag},
              {"residual_sse", fit.residual_sse},
              {"m", fit.theta_hat.size()}};
}

json error_to_json(const EstimationError& e) { return json{{"l2", e.l2}, {"fro", e.fro}, {"spec", e.spec}}; }

// ---------------------------------------------------------------------------

BoundConfig bound_config_from_json(const json& j) {
  BoundConfig c;
  if (j.is_null()) return c;
  c.delta = j.value("delta", c.delta);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("C0")) c.C0 = j.at("C0").get<double>();
  c.C1 = j.value("C1", c.C1);
  c.c_explosive = j.value("c_explosive", c.c_explosive);
  c.c1_phase = j.value("c1_phase", c.c1_phase);
  c.k_constant = j.value("k_constant", c.k_constant);
  c.rate_constant = j.value("rate_constant", c.rate_constant);
  if (j.contains("regime")) c.regime = parse_regime(j.at("regime").get<std::string>());
  if (j.contains("b_max")) c.b_max = j.at("b_max").get<int>();
  if (j.contains("cond_S")) c.cond_S = j.at("cond_S").get<double>();
  c.validate();
  return c;
}

json bound_config_to_json(const BoundConfig& c) {
  json out{{"delta", c.delta},         {"alpha", c.alpha},           {"C1", c.C1},
           {"c_explosive", c.c_explosive}, {"c1_phase", c.c1_phase}, {"k_constant", c.k_constant},
           {"rate_constant", c.rate_constant}, {"regime", regime_name(c.regime)}};
  if (c.C0) out["C0"] = *c.C0;
  if (c.b_max) out["b_max"] = *c.b_max;
  if (c.cond_S) out["cond_S"] = *c.cond_S;
  return out;
}

json bound_report_to_json(const BoundReport& r) {
  return json{
      {"regime", regime_name(r.regime)},
      {"n", r.n},
      {"m", r.m},
      {"d", r.d},
      {"k_max_feasible", r.k_max_feasible},
      {"lambda_max_Gamma_Rk", num(r.lambda_max_Gamma_Rk)},
      {"kappa", num(r.kappa)},
      {"xi", num(r.xi)},
      {"upper_gram", r.upper_gram},
      {"logdet_ratio", num(r.logdet_ratio)},
      {"thm1_bound", num(r.thm1_bound)},
      {"thm1_valid", r.thm1_valid},
      {"n_required_thm1", num(r.n_required_thm1)},
      {"prop1_bound", num(r.prop1_bound)},
      {"thm2_bound", num(r.thm2_bound)},
      {"phase", phase_name(r.phase)},
      {"phase_threshold", num(r.phase_threshold)},
      {"thm3_bound", num(r.thm3_bound)},
      {"lower_bound", json{{"rate", num(r.lower.rate)},
                           {"regime", r.lower.regime},
                           {"gamma_n", num(r.lower.gamma_n)},
                           {"epsilon", num(r.lower.epsilon)},
                           {"epsilon_admissible", r.lower.epsilon_admissible}}},
      {"spectral", json{{"rho", r.spectral.rho},
                        {"sigma_min", r.spectral.sigma_min},
                        {"cond_S", num(r.spectral.cond_S)},
                        {"b_max", r.spectral.b_max}}},
      {"C0", r.C0},
  };
}

}  // namespace rvar
