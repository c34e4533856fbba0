#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "corl/data/dataset.hpp"

namespace corl::data {

enum class IoErrc {
  CannotOpen,
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  BadSidecar,
};

class DatasetIoError : public std::runtime_error {
 public:
  DatasetIoError(IoErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  IoErrc code() const noexcept { return code_; }

 private:
  IoErrc code_;
};

inline constexpr char kDatasetMagic[8] = {'C', 'O', 'R', 'L', 'D', 'A', 'T', 'A'};
inline constexpr std::uint32_t kDatasetVersion = 1;

// Raw episode payload of the binary format, without sidecar metadata.
struct TransitionFile {
  std::uint32_t state_dim = 0;
  std::uint32_t action_dim = 0;
  std::vector<std::vector<Transition>> episodes;
};

void write_transitions(std::ostream& out, const TransitionFile& file);
TransitionFile read_transitions(std::istream& in);

nlohmann::json task_to_json(const env::TaskSpec& task);
env::TaskSpec task_from_json(const nlohmann::json& j);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

// Binary file at `path` plus "<path>.meta.json".
void write_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset read_dataset(const std::filesystem::path& path);

// Little-endian primitives shared by the other binary formats.
namespace le {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f32(std::ostream& out, float v);
void put_f64(std::ostream& out, double v);
void put_string(std::ostream& out, const std::string& s);
bool get_u32(std::istream& in, std::uint32_t& v);
bool get_u64(std::istream& in, std::uint64_t& v);
bool get_f32(std::istream& in, float& v);
bool get_f64(std::istream& in, double& v);
bool get_string(std::istream& in, std::string& s);
}  // namespace le

}  // namespace corl::data
