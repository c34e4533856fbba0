#include "corl/metrics/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace corl::metrics {

ResultMatrix::ResultMatrix(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("result matrix needs at least one task");
  entries_.resize(static_cast<std::size_t>(n) * (n + 1) / 2);
}

std::size_t ResultMatrix::offset(int i, int j) const {
  if (i < 1 || i > n_ || j < 1 || j > i) {
    throw std::out_of_range("result matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") is outside the lower triangle");
  }
  return static_cast<std::size_t>(i - 1) * i / 2 + static_cast<std::size_t>(j - 1);
}

void ResultMatrix::set(int i, int j, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("result matrix entries must be finite");
  entries_[offset(i, j)] = value;
}

std::optional<double> ResultMatrix::get(int i, int j) const { return entries_[offset(i, j)]; }

double ResultMatrix::at(int i, int j) const {
  const auto v = get(i, j);
  if (!v) throw std::invalid_argument("missing result entry (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  return *v;
}

double compute_per(const ResultMatrix& m) {
  const int n = m.size();
  if (n < 1) throw std::invalid_argument("PER of an empty result matrix");
  double s = 0.0;
  for (int j = 1; j <= n; ++j) s += m.at(n, j);
  return s / n;
}

double compute_bwt(const ResultMatrix& m) {
  const int n = m.size();
  if (n < 2) throw std::invalid_argument("BWT is undefined for fewer than two tasks");
  double s = 0.0;
  for (int j = 1; j < n; ++j) s += m.at(j, j) - m.at(n, j);
  return s / (n - 1);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

Summary summarize(const std::vector<SeedRun>& runs, const std::string& method, const std::string& selector) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  Summary s;
  s.method = method;
  s.selector = selector;
  s.n_seeds = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    s.per.push_back(compute_per(r.matrix));
    if (r.matrix.size() >= 2) s.bwt.push_back(compute_bwt(r.matrix));
  }
  std::tie(s.per_mean, s.per_std) = mean_std(s.per);
  std::tie(s.bwt_mean, s.bwt_std) = mean_std(s.bwt);
  return s;
}

std::string format_number(double v) {
  // Shortest representation that round-trips.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_summary_json(const Summary& s, const std::filesystem::path& path) {
  const nlohmann::json j = {{"method", s.method},     {"selector", s.selector}, {"per_mean", s.per_mean},
                            {"per_std", s.per_std},   {"bwt_mean", s.bwt_mean}, {"bwt_std", s.bwt_std},
                            {"n_seeds", s.n_seeds}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Summary emit_report(const std::vector<SeedRun>& runs, const std::string& method, const std::string& selector,
                    const std::filesystem::path& dir) {
  const Summary s = summarize(runs, method, selector);
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "raw.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (dir / "raw.csv").string());
    csv << "seed,task_i,task_j,return\n";
    for (const auto& r : runs) {
      for (int i = 1; i <= r.matrix.size(); ++i) {
        for (int j = 1; j <= i; ++j) {
          if (const auto v = r.matrix.get(i, j)) {
            csv << r.seed << ',' << i << ',' << j << ',' << format_number(*v) << '\n';
          }
        }
      }
    }
    if (!csv) throw std::runtime_error("failed writing " + (dir / "raw.csv").string());
  }
  write_summary_json(s, dir / "summary.json");
  return s;
}

std::vector<SeedRun> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "seed,task_i,task_j,return") {
    throw std::runtime_error(path.string() + ": unexpected CSV header");
  }
  struct Row { int i, j; double v; };
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, std::vector<Row>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& x : f) std::getline(ss, x, ',');
    try {
      const std::uint64_t seed = std::stoull(f[0]);
      if (!rows.count(seed)) order.push_back(seed);
      rows[seed].push_back({std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  std::vector<SeedRun> runs;
  for (auto seed : order) {
    int n = 0;
    for (const auto& r : rows[seed]) n = std::max(n, r.i);
    SeedRun run{seed, ResultMatrix(n)};
    for (const auto& r : rows[seed]) run.matrix.set(r.i, r.j, r.v);
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace corl::metrics
