#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nlbranch/model.hpp"

namespace nlbranch {

/// Which rate matrix to build.
///  - BranchingOnly: branching terms only, state 0 naturally absorbing.
///  - Resurrection: branching plus restart jumps out of state 0 only.
///  - Immigration: branching plus immigration jumps from every state.
///  - ImmigrationAbsorbed: Immigration with row 0 zeroed (extinction stops
///    the clock).
///  - BirthDeath: the comparison birth-death process with birth rate
///    d_i = r_i L + gamma m and death rate c_i = r_i b_0.
enum class MatrixKind {
  BranchingOnly,
  Resurrection,
  Immigration,
  ImmigrationAbsorbed,
  BirthDeath,
};

/// How rate mass that would jump past the last authentic state N-1 is
/// handled: redirected onto N-1 (keeps a proper conservative generator,
/// for stationary solves) or sent to an absorbing cemetery row N (yields
/// monotone lower bounds for hitting-time solves).
enum class BoundaryPolicy { ReflectToLast, AbsorbPastLast };

/// Sparse truncation of one of the model's rate matrices. Authentic states
/// are 0..N-1; with AbsorbPastLast an extra all-zero cemetery row N is
/// appended. Immutable after build.
struct GeneratorMatrix {
  MatrixKind kind;
  BoundaryPolicy boundary;
  int truncation = 0;  // N = number of authentic states

  using Row = std::vector<std::pair<int, double>>;  // (column, rate), sorted
  std::vector<Row> rows;

  int n_rows() const { return static_cast<int>(rows.size()); }

  double entry(int i, int j) const {
    for (const auto& [col, v] : rows[i])
      if (col == j) return v;
    return 0.0;
  }

  /// Total exit rate of state i (minus the diagonal entry).
  double total_rate(int i) const { return -entry(i, i); }

  double row_sum(int i) const {
    double s = 0.0;
    for (const auto& [col, v] : rows[i]) s += v;
    return s;
  }
};

namespace gen_detail {

inline void accumulate(GeneratorMatrix::Row& row, int col, double rate) {
  if (rate == 0.0) return;
  for (auto& [c, v] : row) {
    if (c == col) {
      v += rate;
      return;
    }
  }
  row.emplace_back(col, rate);
}

}  // namespace gen_detail

/// Build an N-state truncation of the requested rate matrix.
inline GeneratorMatrix build_generator(const ModelSpec& spec, MatrixKind kind,
                                       int truncation,
                                       BoundaryPolicy boundary) {
  if (truncation < 2)
    throw std::invalid_argument("generator: truncation must be >= 2");
  const int n = truncation;
  const bool absorb = boundary == BoundaryPolicy::AbsorbPastLast;

  GeneratorMatrix gen;
  gen.kind = kind;
  gen.boundary = boundary;
  gen.truncation = n;
  gen.rows.resize(absorb ? n + 1 : n);

  const auto& b = spec.offspring.probs();
  const auto& a = spec.immigration.probs();
  const double gamma = spec.gamma;
  const double big_l = offspring_slope(spec);   // L = M + b_0 - 1
  const double imm_mean = spec.immigration.mean();

  auto clip = [&](int target) {
    return target >= n ? (absorb ? n : n - 1) : target;
  };

  for (int i = 0; i < n; ++i) {
    auto& row = gen.rows[i];
    const double r = spec.rate(static_cast<std::uint64_t>(i));

    switch (kind) {
      case MatrixKind::ImmigrationAbsorbed:
        if (i == 0) continue;  // extinction is absorbing
        [[fallthrough]];
      case MatrixKind::Immigration: {
        gen_detail::accumulate(row, i, -(r + gamma));
        if (i >= 1 && b[0] != 0.0)
          gen_detail::accumulate(row, i - 1, r * b[0]);
        for (std::size_t k = 2; k < b.size(); ++k)
          if (b[k] != 0.0)
            gen_detail::accumulate(row, clip(i + int(k) - 1), r * b[k]);
        for (std::size_t j = 1; j < a.size(); ++j)
          if (a[j] != 0.0)
            gen_detail::accumulate(row, clip(i + int(j)), gamma * a[j]);
        break;
      }
      case MatrixKind::BranchingOnly:
      case MatrixKind::Resurrection: {
        if (i == 0) {
          if (kind == MatrixKind::Resurrection && gamma > 0.0) {
            gen_detail::accumulate(row, 0, -gamma);
            for (std::size_t j = 1; j < a.size(); ++j)
              if (a[j] != 0.0)
                gen_detail::accumulate(row, clip(int(j)), gamma * a[j]);
          }
          break;  // BranchingOnly: state 0 absorbing
        }
        gen_detail::accumulate(row, i, -r);
        if (b[0] != 0.0) gen_detail::accumulate(row, i - 1, r * b[0]);
        for (std::size_t k = 2; k < b.size(); ++k)
          if (b[k] != 0.0)
            gen_detail::accumulate(row, clip(i + int(k) - 1), r * b[k]);
        break;
      }
      case MatrixKind::BirthDeath: {
        const double d = r * big_l + gamma * imm_mean;
        const double c = r * b[0];
        if (d < 0.0)
          throw std::invalid_argument(
              "generator: birth-death rates need L = M + b_0 - 1 >= 0");
        gen_detail::accumulate(row, i, -(d + c));
        if (i >= 1 && c != 0.0) gen_detail::accumulate(row, i - 1, c);
        if (d != 0.0) gen_detail::accumulate(row, clip(i + 1), d);
        break;
      }
    }
  }
  for (auto& row : gen.rows)
    std::sort(row.begin(), row.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
  return gen;
}

/// Discrete-time jump chain of a generator: pi_ij = q_ij / (-q_ii) off the
/// diagonal; rows with zero total rate become identity rows.
struct EmbeddedChain {
  std::vector<GeneratorMatrix::Row> rows;

  int n_rows() const { return static_cast<int>(rows.size()); }
  double prob(int i, int j) const {
    for (const auto& [col, v] : rows[i])
      if (col == j) return v;
    return 0.0;
  }
};

inline EmbeddedChain embedded(const GeneratorMatrix& gen) {
  EmbeddedChain chain;
  chain.rows.resize(gen.rows.size());
  for (std::size_t i = 0; i < gen.rows.size(); ++i) {
    const double total = gen.total_rate(static_cast<int>(i));
    if (total <= 0.0) {
      chain.rows[i] = {{static_cast<int>(i), 1.0}};
      continue;
    }
    for (const auto& [col, v] : gen.rows[i])
      if (col != static_cast<int>(i))
        chain.rows[i].emplace_back(col, v / total);
  }
  return chain;
}

/// Plain-text sparse triplet dump, one "i j rate" per line, ascending i
/// then j.
inline void write_triplets(const GeneratorMatrix& gen, std::ostream& os) {
  for (int i = 0; i < gen.n_rows(); ++i)
    for (const auto& [col, v] : gen.rows[i])
      os << i << ' ' << col << ' ' << v << '\n';
}

}  // namespace nlbranch
