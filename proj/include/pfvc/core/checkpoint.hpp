#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfvc/core/tensor.hpp"

namespace pfvc::core {

// On-disk container for trained state. Layout (little-endian):
//   "PFVC" | u32 version | u32 hash_len | hash | u32 n_records |
//   records{ u32 name_len | name | u8 dtype | u32 rank | u64 dims[] | values } |
//   u32 crc32 over everything before it
// dtype 0 = f64, 1 = f32. Round trips are bit-exact for f64 records.
struct Checkpoint {
  uint32_t version = 1;
  std::string config_hash;
  std::vector<std::pair<std::string, Tensor>> records;

  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
  void put(const std::string& name, Tensor t);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     bool values_as_f32 = false);
Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_config_hash = "");

uint32_t crc32(const uint8_t* data, size_t n);

}  // namespace pfvc::core
