#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace corl::metrics {

// a(i, j): return on task j after learning task i, for 1 <= j <= i <= N.
class ResultMatrix {
 public:
  ResultMatrix() = default;
  explicit ResultMatrix(int n);

  int size() const { return n_; }
  void set(int i, int j, double value);
  std::optional<double> get(int i, int j) const;
  double at(int i, int j) const;  // throws if missing
  bool has(int i, int j) const { return get(i, j).has_value(); }

  bool operator==(const ResultMatrix&) const = default;

 private:
  std::size_t offset(int i, int j) const;

  int n_ = 0;
  std::vector<std::optional<double>> entries_;
};

// (1/N) sum_n a(N, n)
double compute_per(const ResultMatrix& m);
// (1/(N-1)) sum_{n<N} (a(n, n) - a(N, n)); higher means more forgetting.
double compute_bwt(const ResultMatrix& m);

struct SeedRun {
  std::uint64_t seed = 0;
  ResultMatrix matrix;
};

struct Summary {
  std::string method;
  std::string selector;
  double per_mean = 0.0;
  double per_std = 0.0;
  double bwt_mean = 0.0;
  double bwt_std = 0.0;
  int n_seeds = 0;
  // Per-seed values, in run order.
  std::vector<double> per;
  std::vector<double> bwt;
};

// Means and population standard deviations over seeds. BWT entries are
// omitted for single-task runs.
Summary summarize(const std::vector<SeedRun>& runs, const std::string& method, const std::string& selector);

void write_summary_json(const Summary& s, const std::filesystem::path& path);

// Writes <dir>/raw.csv (seed,task_i,task_j,return) and <dir>/summary.json.
Summary emit_report(const std::vector<SeedRun>& runs, const std::string& method, const std::string& selector,
                    const std::filesystem::path& dir);

std::vector<SeedRun> read_raw_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace corl::metrics
