#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rcpred/error.hpp"
#include "rcpred/rng.hpp"

namespace rcpred::core {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Treatment arm under which outcomes are predicted.
struct TargetTreatment {
  int a = 1;

  TargetTreatment() = default;
  explicit TargetTreatment(int value) : a(value) {
    if (a != 0 && a != 1)
      throw DomainError("TargetTreatment: a must be 0 or 1");
  }
};

// One row per observed case: runtime-available predictors V, runtime-hidden
// confounders Z (possibly zero columns), binary treatment A, real outcome Y.
struct ObservationTable {
  MatrixXd v;          // n x d_V
  MatrixXd z;          // n x d_Z, d_Z >= 0
  std::vector<int> a;  // entries in {0, 1}
  VectorXd y;          // length n

  Index n() const { return v.rows(); }
  Index d_v() const { return v.cols(); }
  Index d_z() const { return z.cols(); }

  // Concatenated (V, Z) design matrix.
  MatrixXd vz() const {
    MatrixXd out(n(), d_v() + d_z());
    out.leftCols(d_v()) = v;
    if (d_z() > 0) out.rightCols(d_z()) = z;
    return out;
  }

  ObservationTable rows(const std::vector<Index>& idx) const {
    ObservationTable out;
    out.v.resize(static_cast<Index>(idx.size()), d_v());
    out.z.resize(static_cast<Index>(idx.size()), d_z());
    out.y.resize(static_cast<Index>(idx.size()));
    out.a.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.v.row(static_cast<Index>(i)) = v.row(idx[i]);
      if (d_z() > 0) out.z.row(static_cast<Index>(i)) = z.row(idx[i]);
      out.y(static_cast<Index>(i)) = y(idx[i]);
      out.a[i] = a[idx[i]];
    }
    return out;
  }

  std::vector<Index> indices_with_treatment(int arm) const {
    std::vector<Index> idx;
    for (Index i = 0; i < n(); ++i)
      if (a[static_cast<std::size_t>(i)] == arm) idx.push_back(i);
    return idx;
  }
};

inline void validate(const ObservationTable& table) {
  const Index n = table.v.rows();
  if (n < 1) throw DimensionError("ObservationTable: need at least one row");
  if (table.z.cols() > 0 && table.z.rows() != n)
    throw DimensionError("ObservationTable: z row count differs from v");
  if (static_cast<Index>(table.a.size()) != n)
    throw DimensionError("ObservationTable: a length differs from v rows");
  if (table.y.size() != n)
    throw DimensionError("ObservationTable: y length differs from v rows");
  for (int ai : table.a)
    if (ai != 0 && ai != 1)
      throw DomainError("ObservationTable: treatment entries must be 0 or 1");
  if (!table.v.allFinite() || (table.z.size() > 0 && !table.z.allFinite()))
    throw DomainError("ObservationTable: non-finite predictor entry");
  if (!table.y.allFinite())
    throw DomainError("ObservationTable: non-finite outcome entry");
}

// Assignment of n rows to k folds.
struct FoldAssignment {
  std::vector<int> labels;  // values in [0, k)
  int k = 0;

  std::vector<std::vector<Index>> fold_indices() const {
    std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
      folds[static_cast<std::size_t>(labels[i])].push_back(
          static_cast<Index>(i));
    return folds;
  }
};

// Seeded Fisher-Yates shuffle of the row indices followed by round-robin
// labeling, so fold sizes differ by at most one and identical (n, k, seed)
// always produce identical labels.
inline FoldAssignment split_folds(Index n, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<Index>(k) > n)
    throw InvalidArgument("split_folds: need 1 <= k <= n, got k=" +
                          std::to_string(k) + ", n=" + std::to_string(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  FoldAssignment out;
  out.k = k;
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    out.labels[static_cast<std::size_t>(order[pos])] =
        static_cast<int>(pos % static_cast<std::size_t>(k));
  return out;
}

}  // namespace rcpred::core
