#include "corl/data/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace corl::data {

namespace le {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

bool get_f32(std::istream& in, float& v) {
  std::uint32_t u;
  if (!get_u32(in, u)) return false;
  v = std::bit_cast<float>(u);
  return true;
}

bool get_f64(std::istream& in, double& v) {
  std::uint64_t u;
  if (!get_u64(in, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

bool get_string(std::istream& in, std::string& s) {
  std::uint32_t n;
  if (!get_u32(in, n)) return false;
  s.resize(n);
  return static_cast<bool>(in.read(s.data(), n));
}

}  // namespace le

void write_transitions(std::ostream& out, const TransitionFile& file) {
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  le::put_u32(out, kDatasetVersion);
  le::put_u32(out, file.state_dim);
  le::put_u32(out, file.action_dim);
  le::put_u32(out, static_cast<std::uint32_t>(file.episodes.size()));
  for (const auto& ep : file.episodes) {
    le::put_u32(out, static_cast<std::uint32_t>(ep.size()));
    for (const auto& t : ep) {
      if (t.s.size() != file.state_dim || t.s_next.size() != file.state_dim || t.a.size() != file.action_dim) {
        throw ShapeError("write_transitions: transition dims do not match the header");
      }
      for (float x : t.s) le::put_f32(out, x);
      for (float x : t.a) le::put_f32(out, x);
      le::put_f32(out, t.r);
      for (float x : t.s_next) le::put_f32(out, x);
      le::put_f32(out, t.done);
    }
  }
}

TransitionFile read_transitions(std::istream& in) {
  char magic[sizeof(kDatasetMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
    throw DatasetIoError(IoErrc::BadMagic, "bad magic: not a CORLDATA file");
  }
  std::uint32_t version = 0;
  TransitionFile file;
  std::uint32_t count = 0;
  if (!le::get_u32(in, version)) throw DatasetIoError(IoErrc::TruncatedPayload, "truncated payload in header");
  if (version != kDatasetVersion) {
    throw DatasetIoError(IoErrc::VersionMismatch,
                         "version mismatch: file has " + std::to_string(version) + ", expected " +
                             std::to_string(kDatasetVersion));
  }
  if (!le::get_u32(in, file.state_dim) || !le::get_u32(in, file.action_dim) || !le::get_u32(in, count)) {
    throw DatasetIoError(IoErrc::TruncatedPayload, "truncated payload in header");
  }
  file.episodes.resize(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    auto truncated = [e] {
      return DatasetIoError(IoErrc::TruncatedPayload, "truncated payload in episode " + std::to_string(e));
    };
    std::uint32_t len = 0;
    if (!le::get_u32(in, len)) throw truncated();
    auto& ep = file.episodes[e];
    ep.resize(len);
    for (auto& t : ep) {
      t.s.resize(file.state_dim);
      t.a.resize(file.action_dim);
      t.s_next.resize(file.state_dim);
      bool ok = true;
      for (float& x : t.s) ok = ok && le::get_f32(in, x);
      for (float& x : t.a) ok = ok && le::get_f32(in, x);
      ok = ok && le::get_f32(in, t.r);
      for (float& x : t.s_next) ok = ok && le::get_f32(in, x);
      ok = ok && le::get_f32(in, t.done);
      if (!ok) throw truncated();
    }
  }
  return file;
}

nlohmann::json task_to_json(const env::TaskSpec& t) {
  return {{"family", env::to_string(t.family)}, {"param", t.param},           {"gamma", t.gamma},
          {"horizon", t.horizon},               {"dt", t.dt},                 {"v_max", t.v_max},
          {"action_bound", t.action_bound},     {"action_cost", t.action_cost}, {"rho0_sigma", t.rho0_sigma},
          {"r_max", t.r_max}};
}

env::TaskSpec task_from_json(const nlohmann::json& j) {
  env::TaskSpec t;
  t.family = env::parse_family(j.at("family").get<std::string>());
  t.param = j.at("param").get<double>();
  t.gamma = j.at("gamma").get<double>();
  t.horizon = j.at("horizon").get<int>();
  t.dt = j.at("dt").get<double>();
  t.v_max = j.at("v_max").get<double>();
  t.action_bound = j.at("action_bound").get<double>();
  t.action_cost = j.at("action_cost").get<double>();
  t.rho0_sigma = j.at("rho0_sigma").get<double>();
  t.r_max = j.at("r_max").get<double>();
  t.validate();
  return t;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

void write_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  TransitionFile file{static_cast<std::uint32_t>(ds.state_dim), static_cast<std::uint32_t>(ds.action_dim), {}};
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& e : ds.episodes) {
    file.episodes.push_back(e.transitions);
    sources.push_back(to_string(e.source));
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetIoError(IoErrc::CannotOpen, "cannot open " + path.string() + " for writing");
    write_transitions(out, file);
  }
  nlohmann::json meta = {
      {"task", task_to_json(ds.task)},
      {"quality", to_string(ds.quality)},
      {"behavior", {{"kind", "p-controller"}, {"gain", ds.behavior.gain}, {"noise", ds.behavior.noise}}},
      {"episode_sources", sources},
  };
  std::ofstream side(sidecar_path(path));
  if (!side) throw DatasetIoError(IoErrc::CannotOpen, "cannot open sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

OfflineDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetIoError(IoErrc::CannotOpen, "cannot open " + path.string());
  TransitionFile file = read_transitions(in);

  std::ifstream side(sidecar_path(path));
  if (!side) throw DatasetIoError(IoErrc::BadSidecar, "missing sidecar " + sidecar_path(path).string());
  OfflineDataset ds;
  try {
    const auto meta = nlohmann::json::parse(side);
    ds.task = task_from_json(meta.at("task"));
    ds.quality = parse_quality(meta.at("quality").get<std::string>());
    ds.behavior.gain = meta.at("behavior").at("gain").get<double>();
    ds.behavior.noise = meta.at("behavior").at("noise").get<double>();
    const auto& sources = meta.at("episode_sources");
    if (sources.size() != file.episodes.size()) {
      throw std::invalid_argument("episode_sources length does not match episode count");
    }
    ds.state_dim = static_cast<int>(file.state_dim);
    ds.action_dim = static_cast<int>(file.action_dim);
    for (std::size_t e = 0; e < file.episodes.size(); ++e) {
      ds.episodes.push_back({std::move(file.episodes[e]), parse_behavior(sources[e].get<std::string>())});
    }
  } catch (const DatasetIoError&) {
    throw;
  } catch (const std::exception& ex) {
    throw DatasetIoError(IoErrc::BadSidecar, std::string("bad sidecar: ") + ex.what());
  }
  return ds;
}

}  // namespace corl::data
