#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "siamdff/params.hpp"
#include "siamdff/tensor.hpp"

namespace siamdff {

// Flat binary tensor layout, little-endian regardless of host:
//   u32 rank, u32 extent per axis, then f64 payload in row-major order.
// Payload is always f64 on disk, even in the f32 build.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Human-readable variant for small fixtures: {"shape": [...], "data": [...]}.
std::string tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const std::string& text);

// ParamSet binary: u32 entry count, then per entry u32 name length, name
// bytes, tensor. Entries appear in identifier order.
void write_params(std::ostream& os, const ParamSet& params);
ParamSet read_params(std::istream& is);
void save_params(const std::string& path, const ParamSet& params);
ParamSet load_params(const std::string& path);

std::string params_to_json(const ParamSet& params);
ParamSet params_from_json(const std::string& text);

}  // namespace siamdff
