#pragma once

#include <string>

#include <json.hpp>

#include "igauss/chain.hpp"

namespace igauss {

using Json = nlohmann::ordered_json;

inline constexpr int kChainFormatVersion = 1;

/// C99 hex-float text ("%a"); parses back to the identical double.
std::string to_hex_float(double v);
double from_hex_float(const std::string& s);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json matrix_to_json(const Matrix& m);  // row-major list of rows
Matrix matrix_from_json(const Json& j);

Json rotation_to_json(const Rotation& r);
Rotation rotation_from_json(const Json& j);
Json map_to_json(const CoordinatewiseMap& m);
CoordinatewiseMap map_from_json(const Json& j);

/// {version, dim, layers:[{rotation:{type,data}, map:{type,params}}]}
Json chain_to_json(const TransportChain& c);
TransportChain chain_from_json(const Json& j);

}  // namespace igauss
