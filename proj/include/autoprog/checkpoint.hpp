#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "autoprog/vit.hpp"

namespace autoprog {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "APRG", u32 version, u32 header length, header text (key = value
// lines), u64 entry count, then per entry: u32 name length, name, u32 rank,
// u64 dims, u8 requires_grad, little-endian f64 data.
struct Checkpoint {
  std::map<std::string, std::string> header;
  VisionTransformer model{ViTConfig{}};
  // Additional named arrays such as momentum-network shadows.
  std::map<std::string, Tensor> extra;
};

void save_checkpoint(const std::string& path, const VisionTransformer& model,
                     const std::map<std::string, std::string>& header, const std::map<std::string, Tensor>& extra = {});
Checkpoint load_checkpoint(const std::string& path);

// Model config as header entries and back.
std::map<std::string, std::string> model_header(const ViTConfig& config);
ViTConfig model_from_header(const std::map<std::string, std::string>& header);

}  // namespace autoprog
