#include <fstream>

#include "corl/data/dataset_io.hpp"
#include "corl/select/selection.hpp"

namespace corl::select {

void write_buffer(const ReplayBuffer& buffer, const std::filesystem::path& path) {
  data::TransitionFile file;
  if (!buffer.transitions.empty()) {
    file.state_dim = static_cast<std::uint32_t>(buffer.transitions.front().s.size());
    file.action_dim = static_cast<std::uint32_t>(buffer.transitions.front().a.size());
  }
  file.episodes.push_back(buffer.transitions);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data::DatasetIoError(data::IoErrc::CannotOpen, "cannot open " + path.string());
    data::write_transitions(out, file);
  }
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& r : buffer.provenance) prov.push_back({r.episode, r.step});
  const nlohmann::json meta = {{"selector", to_string(buffer.selector)},
                               {"capacity", buffer.capacity},
                               {"source_task", buffer.source_task},
                               {"provenance", prov}};
  std::ofstream side(data::sidecar_path(path));
  if (!side) throw data::DatasetIoError(data::IoErrc::CannotOpen, "cannot open sidecar for " + path.string());
  side << meta.dump() << '\n';
}

ReplayBuffer read_buffer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DatasetIoError(data::IoErrc::CannotOpen, "cannot open " + path.string());
  data::TransitionFile file = data::read_transitions(in);
  std::ifstream side(data::sidecar_path(path));
  if (!side) throw data::DatasetIoError(data::IoErrc::BadSidecar, "missing sidecar for " + path.string());
  ReplayBuffer buf;
  try {
    const auto meta = nlohmann::json::parse(side);
    buf.selector = parse_selector(meta.at("selector").get<std::string>());
    buf.capacity = meta.at("capacity").get<int>();
    buf.source_task = meta.at("source_task").get<int>();
    for (const auto& p : meta.at("provenance")) buf.provenance.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  } catch (const std::exception& ex) {
    throw data::DatasetIoError(data::IoErrc::BadSidecar, std::string("bad buffer sidecar: ") + ex.what());
  }
  if (file.episodes.size() == 1) buf.transitions = std::move(file.episodes.front());
  if (buf.transitions.size() != buf.provenance.size()) {
    throw data::DatasetIoError(data::IoErrc::BadSidecar, "buffer provenance length does not match payload");
  }
  return buf;
}

}  // namespace corl::select
