#pragma once

#include "json.hpp"

#include "liftctl/common.hpp"

namespace liftctl {

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

}  // namespace liftctl
