#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "o3n/autodiff.hpp"
#include "o3n/tensor.hpp"

namespace o3n {

/// Named float32 tensors plus key=value metadata.
///
/// On disk (little-endian): "O3NC", u32 version = 1, u32 tensor count, then per tensor
/// u16 name length, name bytes, u8 ndims, u32 dims..., float32 payload; finally u32 length
/// followed by UTF-8 `key=value` lines.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::map<std::string, std::string> meta;

  const Tensor<float>* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr char kCheckpointMagic[4] = {'O', '3', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const ad::ParamSet<float>& params, std::map<std::string, std::string> meta = {});

/// Copies every checkpoint tensor named in `params` into it. Throws ShapeMismatch when a name is
/// missing or the shapes differ.
void load_into(ad::ParamSet<float>& params, const Checkpoint& ckpt, const std::vector<std::string>& names);

}  // namespace o3n
