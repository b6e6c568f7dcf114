#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "meshflow/error.hpp"
#include "meshflow/model.hpp"
#include "meshflow/optim.hpp"

namespace meshflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model tensors, batchnorm running statistics and optimizer state.
///
/// File layout (little-endian): "MFCK", u32 version, u64 header length, JSON
/// header, float64 payload. The header holds the model configuration, the
/// config echo and a table of (name, rows, cols, offset) for every tensor.
struct Checkpoint {
  Model model;
  std::string stage = "init";  // init | pretrain_ae | train_flow | end_to_end
  AdamState ae_optimizer;
  AdamState flow_optimizer;
  std::map<std::string, std::string> config;  // resolved run config echo
};

class VersionMismatchError : public CorruptFileError {
 public:
  using CorruptFileError::CorruptFileError;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError unless the checkpoint has `code_dim` and `blocks`.
void require_compatible(const Checkpoint& ckpt, std::size_t code_dim, std::size_t blocks);

}  // namespace meshflow
