#pragma once

#include <string>

#include "sfac/tensor.hpp"

namespace sfac {

// SFT1 tensor container:
//   magic "SFT1"
//   u32 LE header length
//   UTF-8 JSON header {"shape":[...],"dtype":"f32"|"f64"}
//   raw little-endian payload
// Tensors are held as f64 in memory; "f32" files are widened on read and
// narrowed on write.
enum class Dtype { F64, F32 };

void write_sft1(const std::string& path, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor read_sft1(const std::string& path);

}  // namespace sfac
