#pragma once

#include <map>
#include <string>

#include "aiwdn/autodiff.hpp"

namespace aiwdn::ad {

// Binary named-tensor container: magic, tensor count, then per tensor a
// name, a shape header, and the raw double buffer. Round-trips exactly.
using TensorMap = std::map<std::string, Tensor>;

void save_checkpoint(const TensorMap& tensors, const std::string& path);
TensorMap load_checkpoint(const std::string& path);

}  // namespace aiwdn::ad
