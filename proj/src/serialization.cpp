#include "igauss/serialization.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>

namespace igauss {

std::string to_hex_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double from_hex_float(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
    throw ContractViolation("from_hex_float: cannot parse '" + s + "'");
  }
  return v;
}

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(to_hex_float(v(i)));
  return arr;
}

Vector vector_from_json(const Json& j) {
  require(j.is_array(), "vector_from_json: expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    v(static_cast<Eigen::Index>(i)) = e.is_string() ? from_hex_float(e.get<std::string>()) : e.get<double>();
  }
  return v;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  require(j.is_array(), "matrix_from_json: expected array of rows");
  if (j.empty()) return Matrix(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from_json(j[i]);
    require(row.size() == cols, "matrix_from_json: ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

Json rotation_to_json(const Rotation& r) {
  Json j;
  if (r.kind() == Rotation::Kind::dense) {
    j["type"] = "dense";
    j["data"] = matrix_to_json(r.dense_matrix());
  } else {
    j["type"] = "householder";
    // One row per reflector w_j.
    j["data"] = matrix_to_json(r.reflectors().transpose());
  }
  return j;
}

Rotation rotation_from_json(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "dense") return Rotation::dense(matrix_from_json(j.at("data")));
  if (type == "householder") {
    const Json& data = j.at("data");
    const Eigen::Index d = j.contains("dim") ? j.at("dim").get<Eigen::Index>() : -1;
    Matrix w = matrix_from_json(data);
    if (w.size() == 0) {
      require(d >= 0, "rotation_from_json: identity rotation needs dim");
      return Rotation::identity(d);
    }
    return Rotation::householder(w.cols(), w.transpose());
  }
  throw ContractViolation("rotation_from_json: unknown rotation type '" + type + "'");
}

Json map_to_json(const CoordinatewiseMap& m) {
  Json j;
  if (m.is_affine()) {
    j["type"] = "affine";
    j["params"] = {{"shift", vector_to_json(m.affine().shift())}, {"log_scale", vector_to_json(m.affine().log_scale())}};
  } else {
    const auto& s = m.spline();
    j["type"] = "rq_spline";
    j["params"] = {{"knots", s.knots()},
                   {"bound", to_hex_float(s.bound())},
                   {"raw_widths", matrix_to_json(s.raw_widths())},
                   {"raw_heights", matrix_to_json(s.raw_heights())},
                   {"raw_derivs", matrix_to_json(s.raw_derivs())}};
  }
  return j;
}

CoordinatewiseMap map_from_json(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  const Json& p = j.at("params");
  if (type == "affine") return AffineMap(vector_from_json(p.at("shift")), vector_from_json(p.at("log_scale")));
  if (type == "rq_spline") {
    const int knots = p.at("knots").get<int>();
    const Json& b = p.at("bound");
    const double bound = b.is_string() ? from_hex_float(b.get<std::string>()) : b.get<double>();
    Matrix rw = matrix_from_json(p.at("raw_widths"));
    Matrix rh = matrix_from_json(p.at("raw_heights"));
    Matrix rd = matrix_from_json(p.at("raw_derivs"));
    if (knots == 1) rd.resize(rw.rows(), 0);
    return RQSplineMap(knots, bound, std::move(rw), std::move(rh), std::move(rd));
  }
  throw ContractViolation("map_from_json: unknown map type '" + type + "'");
}

Json chain_to_json(const TransportChain& c) {
  Json j;
  j["version"] = kChainFormatVersion;
  j["dim"] = c.dim();
  Json layers = Json::array();
  for (const auto& layer : c.layers()) {
    Json rot = rotation_to_json(layer.rotation);
    if (layer.rotation.kind() == Rotation::Kind::householder) rot["dim"] = layer.rotation.dim();
    layers.push_back({{"rotation", std::move(rot)}, {"map", map_to_json(layer.map)}});
  }
  j["layers"] = std::move(layers);
  return j;
}

TransportChain chain_from_json(const Json& j) {
  const int version = j.at("version").get<int>();
  require(version == kChainFormatVersion, "chain_from_json: unsupported version " + std::to_string(version));
  TransportChain c(j.at("dim").get<Eigen::Index>());
  for (const auto& layer : j.at("layers")) {
    c.push_back(TransportLayer(rotation_from_json(layer.at("rotation")), map_from_json(layer.at("map"))));
  }
  return c;
}

}  // namespace igauss
