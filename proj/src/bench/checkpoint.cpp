#include "corl/bench/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "corl/data/dataset_io.hpp"

namespace corl::bench {

namespace le = data::le;

namespace {

[[noreturn]] void truncated(const char* what) { throw CheckpointError(std::string("truncated checkpoint: ") + what); }

std::uint32_t u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!le::get_u32(in, v)) truncated(what);
  return v;
}
std::uint64_t u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  if (!le::get_u64(in, v)) truncated(what);
  return v;
}
double f64(std::istream& in, const char* what) {
  double v = 0;
  if (!le::get_f64(in, v)) truncated(what);
  return v;
}
float f32(std::istream& in, const char* what) {
  float v = 0;
  if (!le::get_f32(in, v)) truncated(what);
  return v;
}

void put_vec(std::ostream& out, const Eigen::VectorXd& v) {
  le::put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) le::put_f64(out, v(i));
}
Eigen::VectorXd get_vec(std::istream& in) {
  const auto n = u64(in, "vector length");
  if (n > (1ull << 32)) throw CheckpointError("corrupt checkpoint: vector length");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64(in, "vector");
  return v;
}

void put_vecr(std::ostream& out, const nn::VecR& v) {
  le::put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) le::put_f32(out, v(i));
}
nn::VecR get_vecr(std::istream& in) {
  nn::VecR v(u32(in, "normalizer"));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f32(in, "normalizer");
  return v;
}

void put_grads(std::ostream& out, const nn::GradientSet& g) {
  const auto flat = g.flatten();
  le::put_u64(out, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) le::put_f32(out, static_cast<float>(flat(i)));
}
nn::GradientSet get_grads(std::istream& in, const nn::Mlp& like) {
  auto g = nn::GradientSet::zeros_like(like);
  const auto n = u64(in, "optimizer moments");
  if (n != g.size()) throw CheckpointError("corrupt checkpoint: optimizer state does not match its network");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = f32(in, "optimizer moments");
  g.assign(flat);
  return g;
}

void put_adam(std::ostream& out, const nn::AdamState& s) {
  le::put_u64(out, static_cast<std::uint64_t>(s.t));
  le::put_f64(out, s.beta1);
  le::put_f64(out, s.beta2);
  le::put_f64(out, s.eps);
  put_grads(out, s.m);
  put_grads(out, s.v);
}
nn::AdamState get_adam(std::istream& in, const nn::Mlp& like) {
  nn::AdamState s;
  s.t = static_cast<std::int64_t>(u64(in, "optimizer"));
  s.beta1 = f64(in, "optimizer");
  s.beta2 = f64(in, "optimizer");
  s.eps = f64(in, "optimizer");
  s.m = get_grads(in, like);
  s.v = get_grads(in, like);
  return s;
}

void put_policy(std::ostream& out, const continual::MultiHeadPolicy& p) {
  le::put_u32(out, static_cast<std::uint32_t>(p.state_dim));
  le::put_u32(out, static_cast<std::uint32_t>(p.action_dim));
  le::put_f64(out, p.action_bound);
  le::put_u32(out, static_cast<std::uint32_t>(p.shape.hidden_width));
  le::put_u32(out, static_cast<std::uint32_t>(p.shape.hidden_layers));
  put_vecr(out, p.normalizer.mean);
  put_vecr(out, p.normalizer.inv_std);
  std::vector<nn::Mlp> nets{p.trunk};
  nets.insert(nets.end(), p.heads.begin(), p.heads.end());
  write_networks(out, nets);
  put_adam(out, p.trunk_opt);
  for (const auto& o : p.head_opts) put_adam(out, o);
}

continual::MultiHeadPolicy get_policy(std::istream& in) {
  continual::MultiHeadPolicy p;
  p.state_dim = static_cast<int>(u32(in, "policy"));
  p.action_dim = static_cast<int>(u32(in, "policy"));
  p.action_bound = f64(in, "policy");
  p.shape.hidden_width = static_cast<int>(u32(in, "policy"));
  p.shape.hidden_layers = static_cast<int>(u32(in, "policy"));
  p.normalizer.mean = get_vecr(in);
  p.normalizer.inv_std = get_vecr(in);
  auto nets = read_networks(in);
  if (nets.empty()) throw CheckpointError("corrupt checkpoint: policy has no trunk");
  p.trunk = std::move(nets.front());
  p.heads.assign(std::make_move_iterator(nets.begin() + 1), std::make_move_iterator(nets.end()));
  p.trunk_opt = get_adam(in, p.trunk);
  for (const auto& h : p.heads) p.head_opts.push_back(get_adam(in, h));
  return p;
}

void put_regularizer(std::ostream& out, const continual::RegularizerState& r) {
  le::put_u32(out, static_cast<std::uint32_t>(r.method));
  le::put_f64(out, r.strength);
  le::put_f64(out, r.si_damping);
  le::put_u32(out, static_cast<std::uint32_t>(r.anchors.size()));
  for (const auto& a : r.anchors) put_vec(out, a);
  le::put_u32(out, static_cast<std::uint32_t>(r.fisher.size()));
  for (const auto& f : r.fisher) put_vec(out, f);
  put_vec(out, r.omega);
  put_vec(out, r.path);
  put_vec(out, r.task_start);
}

continual::RegularizerState get_regularizer(std::istream& in) {
  continual::RegularizerState r;
  const auto m = u32(in, "regularizer");
  if (m > static_cast<std::uint32_t>(continual::Method::Agem)) throw CheckpointError("corrupt checkpoint: method");
  r.method = static_cast<continual::Method>(m);
  r.strength = f64(in, "regularizer");
  r.si_damping = f64(in, "regularizer");
  for (auto n = u32(in, "anchors"); n > 0; --n) r.anchors.push_back(get_vec(in));
  for (auto n = u32(in, "fisher"); n > 0; --n) r.fisher.push_back(get_vec(in));
  r.omega = get_vec(in);
  r.path = get_vec(in);
  r.task_start = get_vec(in);
  return r;
}

void put_buffer(std::ostream& out, const select::ReplayBuffer& b) {
  le::put_string(out, select::to_string(b.selector));
  le::put_u32(out, static_cast<std::uint32_t>(b.capacity));
  le::put_u32(out, static_cast<std::uint32_t>(b.source_task));
  le::put_u32(out, static_cast<std::uint32_t>(b.provenance.size()));
  for (const auto& r : b.provenance) {
    le::put_u32(out, static_cast<std::uint32_t>(r.episode));
    le::put_u32(out, static_cast<std::uint32_t>(r.step));
  }
  data::TransitionFile file;
  if (!b.transitions.empty()) {
    file.state_dim = static_cast<std::uint32_t>(b.transitions.front().s.size());
    file.action_dim = static_cast<std::uint32_t>(b.transitions.front().a.size());
  }
  file.episodes.push_back(b.transitions);
  data::write_transitions(out, file);
}

select::ReplayBuffer get_buffer(std::istream& in) {
  select::ReplayBuffer b;
  std::string tag;
  if (!le::get_string(in, tag)) truncated("buffer");
  b.selector = select::parse_selector(tag);
  b.capacity = static_cast<int>(u32(in, "buffer"));
  b.source_task = static_cast<int>(u32(in, "buffer"));
  for (auto n = u32(in, "provenance"); n > 0; --n) {
    const int e = static_cast<int>(u32(in, "provenance"));
    const int s = static_cast<int>(u32(in, "provenance"));
    b.provenance.push_back({e, s});
  }
  try {
    auto file = data::read_transitions(in);
    if (file.episodes.size() != 1) throw CheckpointError("corrupt checkpoint: buffer payload");
    b.transitions = std::move(file.episodes.front());
  } catch (const data::DatasetIoError& ex) {
    throw CheckpointError(std::string("corrupt checkpoint buffer: ") + ex.what());
  }
  if (b.transitions.size() != b.provenance.size()) throw CheckpointError("corrupt checkpoint: buffer provenance");
  return b;
}

}  // namespace

void write_networks(std::ostream& out, const std::vector<nn::Mlp>& nets) {
  out.write(kNetworkMagic, sizeof(kNetworkMagic));
  le::put_u32(out, kNetworkVersion);
  le::put_u32(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto& net : nets) {
    le::put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
    le::put_f32(out, net.output_scale());
    for (const auto& l : net.layers()) {
      le::put_u32(out, static_cast<std::uint32_t>(l.in()));
      le::put_u32(out, static_cast<std::uint32_t>(l.out()));
      le::put_u32(out, static_cast<std::uint32_t>(l.activation));
    }
    for (float x : net.flatten()) le::put_f32(out, x);
  }
}

std::vector<nn::Mlp> read_networks(std::istream& in) {
  char magic[sizeof(kNetworkMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kNetworkMagic, sizeof(magic)) != 0) {
    throw CheckpointError("bad magic: expected a CORLNETS block");
  }
  const auto version = u32(in, "network header");
  if (version != kNetworkVersion) {
    throw CheckpointError("network block version mismatch: file has " + std::to_string(version) + ", expected " +
                          std::to_string(kNetworkVersion));
  }
  std::vector<nn::Mlp> nets;
  for (auto count = u32(in, "network header"); count > 0; --count) {
    const auto layers = u32(in, "network layout");
    const float scale = f32(in, "network layout");
    std::vector<nn::Layer<nn::Real>> ls;
    for (std::uint32_t l = 0; l < layers; ++l) {
      const auto fan_in = u32(in, "network layout");
      const auto fan_out = u32(in, "network layout");
      const auto act = u32(in, "network layout");
      if (act > static_cast<std::uint32_t>(nn::Activation::TanhScaled) || fan_in > 1u << 16 || fan_out > 1u << 16) {
        throw CheckpointError("corrupt network layout");
      }
      ls.push_back({nn::MatR::Zero(fan_out, fan_in), nn::VecR::Zero(fan_out), static_cast<nn::Activation>(act)});
    }
    nn::Mlp net(std::move(ls), scale);
    std::vector<float> params(net.parameter_count());
    for (auto& p : params) p = f32(in, "network parameters");
    net.assign(params);
    nets.push_back(std::move(net));
  }
  return nets;
}

void write_checkpoint(const RunCheckpoint& ckpt, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    const auto& s = ckpt.state;
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    le::put_u32(out, kCheckpointVersion);
    le::put_u64(out, ckpt.seed);
    le::put_string(out, ckpt.config);
    le::put_u32(out, static_cast<std::uint32_t>(s.tasks_done));
    const int n = s.results.size();
    le::put_u32(out, static_cast<std::uint32_t>(n));
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j <= i; ++j) {
        const auto v = s.results.get(i, j);
        le::put_u32(out, v ? 1u : 0u);
        le::put_f64(out, v.value_or(0.0));
      }
    }
    put_policy(out, s.policy);
    put_regularizer(out, s.regularizer);
    le::put_u32(out, static_cast<std::uint32_t>(s.buffers.size()));
    for (const auto& b : s.buffers) put_buffer(out, b);
    out.flush();
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("bad magic: " + path.string() + " is not a CORLCKPT file");
  }
  const auto version = u32(in, "header");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  RunCheckpoint ck;
  ck.seed = u64(in, "header");
  if (!le::get_string(in, ck.config)) truncated("header");
  auto& s = ck.state;
  s.tasks_done = static_cast<int>(u32(in, "header"));
  const auto n = static_cast<int>(u32(in, "results"));
  if (n < 1 || n > 10000) throw CheckpointError("corrupt checkpoint: task count");
  s.results = metrics::ResultMatrix(n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= i; ++j) {
      const auto present = u32(in, "results");
      const double v = f64(in, "results");
      if (present) s.results.set(i, j, v);
    }
  }
  s.policy = get_policy(in);
  s.regularizer = get_regularizer(in);
  for (auto b = u32(in, "buffers"); b > 0; --b) s.buffers.push_back(get_buffer(in));
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ck;
}

}  // namespace corl::bench
