#include "doctest.h"

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "corl/data/dataset.hpp"
#include "corl/data/dataset_io.hpp"

using namespace corl;
using namespace corl::data;

namespace {

env::TaskSpec dir_task(double angle) {
  env::TaskSpec t;
  t.param = angle;
  return t;
}

env::TaskSpec vel_task(double target) {
  env::TaskSpec t;
  t.family = env::Family::PmVel;
  t.param = target;
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "corl_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double episode_return(const Episode& e) {
  double r = 0;
  for (const auto& t : e.transitions) r += t.r;
  return r;
}

}  // namespace

TEST_CASE("behavior_action: controller fixed points and saturation") {
  Rng rng(1);
  BehaviorParams quiet{1.0, 0.0};
  env::EnvState s;
  s.velocity[0] = 0.4;
  const auto a = behavior_action(vel_task(0.4), s, Behavior::Medium, rng, quiet);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == 0.0);

  const auto d = behavior_action(dir_task(0.0), env::EnvState{}, Behavior::Medium, rng, quiet);
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 1.0);
  CHECK(d[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(parse_behavior("expert"), std::invalid_argument);
  CHECK_THROWS_AS(parse_quality("E"), std::invalid_argument);
}

TEST_CASE("behavior_action: random actions are centred and bounded") {
  Rng rng(2);
  const auto task = dir_task(1.0);
  const int n = 100000;
  double m0 = 0, m1 = 0;
  for (int i = 0; i < n; ++i) {
    const auto a = behavior_action(task, env::EnvState{}, Behavior::Random, rng);
    REQUIRE(std::abs(a[0]) <= task.action_bound);
    m0 += a[0];
    m1 += a[1];
  }
  const double sigma = task.action_bound / std::sqrt(3.0);
  CHECK(std::abs(m0 / n) < 3 * sigma / std::sqrt(n));
  CHECK(std::abs(m1 / n) < 3 * sigma / std::sqrt(n));
}

TEST_CASE("generate_dataset: mixture counts, chaining and horizon") {
  const auto ds = generate_dataset(dir_task(0.7), Quality::MediumRandom, 10, 3);
  int medium = 0, random = 0;
  for (const auto& e : ds.episodes) {
    (e.source == Behavior::Medium ? medium : random)++;
    REQUIRE(static_cast<int>(e.transitions.size()) == ds.task.horizon);
    for (std::size_t t = 0; t + 1 < e.transitions.size(); ++t) {
      REQUIRE(e.transitions[t].s_next == e.transitions[t + 1].s);
      REQUIRE(e.transitions[t].done == 0.0f);
    }
    CHECK(e.transitions.back().done == 1.0f);
  }
  CHECK(medium == 5);
  CHECK(random == 5);
  CHECK(ds.transition_count() == 1000);

  const auto odd = generate_dataset(dir_task(0.7), Quality::MediumRandom, 7, 3);
  int m7 = 0;
  for (const auto& e : odd.episodes) m7 += e.source == Behavior::Medium;
  CHECK(m7 == 4);
  CHECK_THROWS_AS(generate_dataset(dir_task(0.7), Quality::MediumRandom, 1, 3), std::invalid_argument);
}

TEST_CASE("generate_dataset is deterministic and medium beats random") {
  const auto task = vel_task(0.6);
  CHECK(generate_dataset(task, Quality::Medium, 5, 9) == generate_dataset(task, Quality::Medium, 5, 9));
  CHECK_FALSE(generate_dataset(task, Quality::Medium, 5, 9) == generate_dataset(task, Quality::Medium, 5, 10));

  for (const auto& t : {vel_task(0.2), vel_task(0.9), dir_task(0.0), dir_task(4.0)}) {
    const auto med = generate_dataset(t, Quality::Medium, 20, 4);
    double rm = 0;
    for (const auto& e : med.episodes) rm += episode_return(e);
    const env::ActionMap uniform = [&t, rng = std::make_shared<Rng>(5)](std::span<const double>) {
      std::uniform_real_distribution<double> u(-t.action_bound, t.action_bound);
      std::vector<double> a(static_cast<std::size_t>(t.dims()));
      for (auto& x : a) x = u(*rng);
      return a;
    };
    CHECK(rm / 20 > env::evaluate_policy(t, uniform, 20, 6));
  }
}

TEST_CASE("dataset_stats: constant-reward episode, duplication and a two-pass oracle") {
  const auto task = vel_task(0.5);
  auto ds = generate_dataset(task, Quality::Medium, 1, 1);
  for (auto& t : ds.episodes[0].transitions) t.r = -0.01f;
  const auto one = dataset_stats(ds);
  CHECK(one.mean_return == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(one.episode_count == 1);

  auto twice = ds;
  twice.episodes.push_back(ds.episodes[0]);
  const auto two = dataset_stats(twice);
  for (std::size_t d = 0; d < one.state_std.size(); ++d) {
    CHECK(two.state_std[d] == doctest::Approx(one.state_std[d]).epsilon(1e-12));
  }

  const auto mixed = generate_dataset(dir_task(2.0), Quality::MediumRandom, 6, 8);
  const auto st = dataset_stats(mixed);
  const int sd = mixed.state_dim;
  std::vector<double> mean(sd, 0.0), var(sd, 0.0);
  double n = 0;
  for (const auto& e : mixed.episodes)
    for (const auto& t : e.transitions) {
      for (int d = 0; d < sd; ++d) mean[d] += t.s[d];
      n += 1;
    }
  for (auto& m : mean) m /= n;
  for (const auto& e : mixed.episodes)
    for (const auto& t : e.transitions)
      for (int d = 0; d < sd; ++d) var[d] += (t.s[d] - mean[d]) * (t.s[d] - mean[d]);
  for (int d = 0; d < sd; ++d) {
    CHECK(std::abs(st.state_mean[d] - mean[d]) < 1e-12);
    CHECK(std::abs(st.state_std[d] - std::max(std::sqrt(var[d] / n), kStdFloor)) < 1e-12);
  }
  CHECK_THROWS_AS(dataset_stats(OfflineDataset{}), std::invalid_argument);
}

TEST_CASE("std floor applies to constant state dimensions") {
  auto ds = generate_dataset(vel_task(0.5), Quality::Medium, 2, 1);
  for (auto& e : ds.episodes)
    for (auto& t : e.transitions) t.s[0] = 1.0f;
  CHECK(dataset_stats(ds).state_std[0] == kStdFloor);
}

TEST_CASE("write/read round-trip is exact") {
  const auto ds = generate_dataset(dir_task(1.3), Quality::MediumRandom, 6, 2);
  const auto path = temp_file("roundtrip.bin");
  write_dataset(ds, path);
  CHECK(read_dataset(path) == ds);
  CHECK(std::filesystem::exists(sidecar_path(path)));

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "CORLDATA");
}

TEST_CASE("corrupt files raise distinct error codes") {
  const auto ds = generate_dataset(vel_task(0.3), Quality::Medium, 3, 2);
  const auto path = temp_file("corrupt.bin");
  write_dataset(ds, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto expect = [&](const std::string& content, IoErrc code, const std::string& fragment) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
    try {
      read_dataset(path);
      FAIL("expected DatasetIoError");
    } catch (const DatasetIoError& e) {
      CHECK(e.code() == code);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  expect(bad_magic, IoErrc::BadMagic, "bad magic");

  std::string bad_version = bytes;
  bad_version[8] = 7;
  expect(bad_version, IoErrc::VersionMismatch, "version");

  // header (24 bytes) + episode 0 + part of episode 1
  const std::size_t per_transition = (2 + 1 + 1 + 2 + 1) * 4;
  const std::size_t cut = 24 + 4 + 100 * per_transition + 4 + 10 * per_transition;
  expect(bytes.substr(0, cut), IoErrc::TruncatedPayload, "episode 1");

  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  std::ofstream(sidecar_path(path)) << "{not json";
  try {
    read_dataset(path);
    FAIL("expected DatasetIoError");
  } catch (const DatasetIoError& e) {
    CHECK(e.code() == IoErrc::BadSidecar);
  }
  CHECK_THROWS_AS(read_dataset(temp_file("missing.bin")), DatasetIoError);
}

TEST_CASE("transition table sampling and normalizer") {
  const auto ds = generate_dataset(dir_task(0.2), Quality::Medium, 3, 5);
  const auto table = TransitionTable::from_dataset(ds);
  CHECK(table.size() == 300);
  Rng r1(3), r2(3);
  const auto b1 = table.sample(r1, 64);
  const auto b2 = table.sample(r2, 64);
  CHECK(b1.states == b2.states);
  CHECK(b1.size() == 64);

  const std::vector<Eigen::Index> idx{0, 150, 299};
  const auto g = table.gather(idx);
  CHECK(g.states(0, 1) == ds.at(1, 50).s[0]);
  CHECK(g.dones(2) == 1.0f);

  const auto norm = Normalizer::from_stats(dataset_stats(ds));
  const nn::MatR z = norm.apply(table.states());
  for (Eigen::Index d = 0; d < z.rows(); ++d) CHECK(std::abs(z.row(d).cast<double>().mean()) < 1e-4);
  CHECK(Normalizer::identity(4).apply(table.states()) == table.states());
}
