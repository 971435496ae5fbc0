#pragma once

#include <string>
#include <vector>

#include "mixbridge/net.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

// MBW1 container: "MBW1" magic, u32-LE tensor count, then per tensor a u32-LE
// rank, u32-LE dims, and the raw little-endian f64 payload. Round-trips are
// bit-exact.
void mbw1_save(const std::string& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> mbw1_load(const std::string& path);

// Mlp <-> ordered tensor list: per layer the [out, in] weight then the [out]
// bias. Loading validates shapes against the existing net.
std::vector<Tensor> mlp_to_tensors(const Mlp& net);
void mlp_from_tensors(Mlp& net, const std::vector<Tensor>& tensors, std::size_t offset = 0);

std::vector<Tensor> router_to_tensors(const Router& r);
void router_from_tensors(Router& r, const std::vector<Tensor>& tensors);

}  // namespace mixbridge
