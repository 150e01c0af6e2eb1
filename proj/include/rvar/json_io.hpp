#pragma once

#include <json.hpp>

#include <Eigen/Core>

#include "rvar/bounds.hpp"
#include "rvar/estimator.hpp"
#include "rvar/restrictions.hpp"
#include "rvar/var_core.hpp"

namespace rvar {

using json = nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& M);  // array of rows
Eigen::MatrixXd matrix_from_json(const json& j);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

// {"kind":"banded","d":24,"k0":1}, {"kind":"grouped","d":24,"K":2}, {"kind":"scaled_identity","d":5},
// {"kind":"unrestricted","d":3}, {"kind":"network","d":4,"adjacency":[[0,1,..],..]},
// {"kind":"companion","d0":2,"p":3,"inner":{...}}, {"kind":"custom","q":3,"d":3,"zeros":[..],
// "equal":[[..],..],"fixed":[[index,value],..]}, {"kind":"sparse_offdiagonal","d":50,"count":19,"seed":7}.
json pattern_to_json(const RestrictionPattern& p);
RestrictionPattern pattern_from_json(const json& j);

// "normal" or {"student_t": dof}
json law_to_json(const InnovationLaw& law);
InnovationLaw law_from_json(const json& j);

json dgp_to_json(const DgpSpec& s);
DgpSpec dgp_from_json(const json& j);

// {"A": [[..]], "sigma2": 1, "law": "normal"} or {"dgp": {...}, "dgp_seed": 1, "sigma2": 1, "law": ...}
VarModel model_from_json(const json& j, std::uint64_t default_seed = 1);
json model_to_json(const VarModel& m);

json fit_to_json(const FitResult& fit);
json error_to_json(const EstimationError& e);

BoundConfig bound_config_from_json(const json& j);
json bound_config_to_json(const BoundConfig& c);
json bound_report_to_json(const BoundReport& r);

}  // namespace rvar
