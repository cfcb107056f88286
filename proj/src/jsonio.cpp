#include "liftctl/jsonio.hpp"

namespace liftctl {

nlohmann::json matrix_to_json(const Mat& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = data;
    return j;
}

Mat matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    Mat m(rows, cols);
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ValidationError("matrix JSON data length does not match its shape");
    Eigen::Index idx = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(idx++).get<double>();
    return m;
}

nlohmann::json vector_to_json(const Vec& v) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
    return data;
}

Vec vector_from_json(const nlohmann::json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index idx = 0;
    for (const auto& entry : j) v(idx++) = entry.get<double>();
    return v;
}

}  // namespace liftctl
