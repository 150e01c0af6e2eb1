#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "rvar/json_io.hpp"

using namespace rvar;

TEST_CASE("matrices round trip as arrays of rows") {
  Eigen::MatrixXd M(2, 3);
  M << 1, 2, 3, 4, 5.5, -6;
  const json j = matrix_to_json(M);
  CHECK(j.dump() == "[[1.0,2.0,3.0],[4.0,5.5,-6.0]]");
  CHECK(matrix_from_json(j) == M);
  CHECK_THROWS(matrix_from_json(json::parse("[[1,2],[3]]")));
}

TEST_CASE("patterns round trip") {
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(3, 3);
  adj(0, 1) = adj(1, 0) = 1;
  Custom c;
  c.d = 3;
  c.zeros = {1};
  c.equal = {{0, 4}};
  c.fixed = {{2, 0.5}};
  const std::vector<RestrictionPattern> all = {
      Unrestricted{3}, Banded{5, 2}, Network{3, adj}, Grouped{6, 3}, ScaledIdentity{4},
      CompanionVarP{2, 3, std::make_shared<const RestrictionPattern>(ScaledIdentity{2})}, c};
  for (const auto& p : all) {
    CAPTURE(pattern_name(p));
    const RestrictionPattern back = pattern_from_json(pattern_to_json(p));
    CHECK(pattern_name(back) == pattern_name(p));
    const RestrictionBasis a = build_basis(p);
    const RestrictionBasis b = build_basis(back);
    CHECK(a.R() == b.R());
    CHECK(a.gamma() == b.gamma());
  }
  const RestrictionPattern sp = pattern_from_json(json::parse(R"({"kind":"sparse_offdiagonal","d":30,"count":19,"seed":4})"));
  CHECK(free_parameter_count(sp) == 20);
  CHECK_THROWS(pattern_from_json(json::parse(R"({"kind":"banded","d":4,"k0":3})")));
  CHECK_THROWS(pattern_from_json(json::parse(R"({"kind":"triangular","d":4})")));
  CHECK_THROWS(pattern_from_json(json::parse(R"({"kind":"grouped","d":4})")));
}

TEST_CASE("innovation laws") {
  CHECK(is_normal(law_from_json("normal")));
  const InnovationLaw t = law_from_json(json::parse(R"({"student_t": 7})"));
  REQUIRE(std::holds_alternative<StudentTLaw>(t));
  CHECK(std::get<StudentTLaw>(t).dof == 7.0);
  CHECK(law_to_json(t) == json::parse(R"({"student_t": 7.0})"));
  CHECK_THROWS(law_from_json("cauchy"));
}

TEST_CASE("models") {
  const VarModel a = model_from_json(json::parse(R"({"A": [[0.5, 0], [0.1, 0.2]], "sigma2": 2})"));
  CHECK(a.A(1, 0) == 0.1);
  CHECK(a.sigma2 == 2.0);
  const VarModel g1 = model_from_json(json::parse(R"({"dgp": {"which": 1, "d": 6, "rho": 0.8}, "dgp_seed": 3})"));
  const VarModel g2 = model_from_json(json::parse(R"({"dgp": {"which": 1, "d": 6, "rho": 0.8}})"), 3);
  CHECK(g1.A == g2.A);
  const VarModel back = model_from_json(model_to_json(g1));
  CHECK(back.A == g1.A);
  CHECK_THROWS(model_from_json(json::parse(R"({"sigma2": 1})")));
}

TEST_CASE("bound configuration") {
  BoundConfig c;
  c.delta = 0.01;
  c.regime = Regime::Stable1;
  c.b_max = 2;
  const BoundConfig back = bound_config_from_json(bound_config_to_json(c));
  CHECK(back.delta == 0.01);
  CHECK(back.regime == Regime::Stable1);
  CHECK(back.b_max == 2);
  CHECK_FALSE(back.cond_S.has_value());
  CHECK_THROWS(bound_config_from_json(json::parse(R"({"delta": 2})")));
  CHECK_THROWS(bound_config_from_json(json::parse(R"({"regime": "sideways"})")));
}

TEST_CASE("reports write non-finite values as null") {
  BoundReport r;
  r.xi = std::numeric_limits<double>::quiet_NaN();
  const json j = bound_report_to_json(r);
  CHECK(j.at("xi").is_null());
  CHECK(j.at("thm1_bound").is_number());
}
