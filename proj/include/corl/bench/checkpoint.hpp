#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "corl/continual/engine.hpp"

namespace corl::bench {

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'R', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kNetworkMagic[8] = {'C', 'O', 'R', 'L', 'N', 'E', 'T', 'S'};
inline constexpr std::uint32_t kNetworkVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network block: magic, version, count, then per network its layer dims,
// activations, output scale and f32 parameters in Mlp::flatten order.
void write_networks(std::ostream& out, const std::vector<nn::Mlp>& nets);
std::vector<nn::Mlp> read_networks(std::istream& in);

struct RunCheckpoint {
  std::uint64_t seed = 0;
  std::string config;  // canonical JSON of the run's configuration
  continual::SequenceState state;
};

// Written to a temporary file and renamed, so a crash never leaves a partial checkpoint.
void write_checkpoint(const RunCheckpoint& ckpt, const std::filesystem::path& path);
RunCheckpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace corl::bench
