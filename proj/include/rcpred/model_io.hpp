#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rcpred/csv.hpp"
#include "rcpred/error.hpp"
#include "rcpred/methods.hpp"

namespace rcpred::model_io {

using methods::MethodKind;
using methods::PredictionModel;

inline MethodKind method_from_name(const std::string& name) {
  if (name == "TCR") return MethodKind::TCR;
  if (name == "PL") return MethodKind::PL;
  if (name == "DR") return MethodKind::DR;
  if (name == "DECISION") return MethodKind::DECISION;
  throw InvalidArgument("unknown method name '" + name + "'");
}

// Lasso models serialize as a CSV coefficient dump; knn models as a binary
// blob with a leading version byte. A model's family is uniform across folds.

inline void write_lasso_model(const PredictionModel& model,
                              std::ostream& out) {
  out << "rcpred_model,1," << methods::method_name(model.method) << ","
      << (model.uses_hidden ? "VZ" : "V") << ",lasso,"
      << model.fold_models.size() << "\n";
  for (std::size_t f = 0; f < model.fold_models.size(); ++f) {
    const auto& m = model.fold_models[f];
    out << "fold," << f << ",intercept," << csv::format_double(m.intercept)
        << ",chosen_lambda," << csv::format_double(m.chosen_lambda)
        << ",n_features_in," << m.n_features_in << "\n";
    out << "coefficients";
    for (Eigen::Index j = 0; j < m.coefficients.size(); ++j)
      out << "," << csv::format_double(m.coefficients(j));
    out << "\n";
    if (!m.feature_subset.empty()) {
      out << "subset";
      for (auto idx : m.feature_subset) out << "," << idx;
      out << "\n";
    }
  }
}

namespace detail {

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DomainError("model file truncated");
  return value;
}

}  // namespace detail

inline void write_knn_model(const PredictionModel& model, std::ostream& out) {
  out.write("RCPM", 4);
  detail::put<std::uint8_t>(out, 1);  // version
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(model.method));
  detail::put<std::uint8_t>(out, model.uses_hidden ? 1 : 0);
  detail::put<std::uint32_t>(out,
                             static_cast<std::uint32_t>(model.fold_models.size()));
  for (const auto& m : model.fold_models) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.train_x.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.train_x.cols()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_features_in));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.neighbors));
    detail::put<std::uint32_t>(out,
                               static_cast<std::uint32_t>(m.feature_subset.size()));
    for (auto idx : m.feature_subset)
      detail::put<std::int64_t>(out, static_cast<std::int64_t>(idx));
    for (Eigen::Index j = 0; j < m.column_center.size(); ++j)
      detail::put<double>(out, m.column_center(j));
    for (Eigen::Index j = 0; j < m.column_scale.size(); ++j)
      detail::put<double>(out, m.column_scale(j));
    for (Eigen::Index i = 0; i < m.train_x.rows(); ++i)
      for (Eigen::Index j = 0; j < m.train_x.cols(); ++j)
        detail::put<double>(out, m.train_x(i, j));
    for (Eigen::Index i = 0; i < m.train_y.size(); ++i)
      detail::put<double>(out, m.train_y(i));
  }
}

inline void write_model(const PredictionModel& model, const std::string& path) {
  if (model.fold_models.empty())
    throw InvalidArgument("write_model: empty model");
  if (model.fold_models.front().family == regress::Family::lasso) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_lasso_model(model, out);
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_knn_model(model, out);
  }
}

inline PredictionModel read_lasso_model(std::istream& in,
                                        const std::string& first_line) {
  const auto header = csv::split_line(first_line);
  if (header.size() != 6 || header[0] != "rcpred_model" || header[1] != "1")
    throw DomainError("model file: bad header");
  PredictionModel model;
  model.method = method_from_name(header[2]);
  model.uses_hidden = header[3] == "VZ";
  const long folds = csv::parse_long(header[5]);

  std::string line;
  for (long f = 0; f < folds; ++f) {
    if (!std::getline(in, line)) throw DomainError("model file truncated");
    const auto meta = csv::split_line(line);
    if (meta.size() != 8 || meta[0] != "fold")
      throw DomainError("model file: bad fold line");
    regress::FittedRegressor m;
    m.family = regress::Family::lasso;
    m.intercept = csv::parse_double(meta[3]);
    m.chosen_lambda = csv::parse_double(meta[5]);
    m.n_features_in = csv::parse_long(meta[7]);

    if (!std::getline(in, line)) throw DomainError("model file truncated");
    auto coef = csv::split_line(line);
    if (coef.empty() || coef[0] != "coefficients")
      throw DomainError("model file: bad coefficients line");
    m.coefficients.resize(static_cast<Eigen::Index>(coef.size() - 1));
    for (std::size_t j = 1; j < coef.size(); ++j)
      m.coefficients(static_cast<Eigen::Index>(j - 1)) =
          csv::parse_double(coef[j]);

    // Optional subset line.
    const auto pos = in.tellg();
    if (std::getline(in, line)) {
      const auto fields = csv::split_line(line);
      if (!fields.empty() && fields[0] == "subset") {
        for (std::size_t j = 1; j < fields.size(); ++j)
          m.feature_subset.push_back(csv::parse_long(fields[j]));
      } else {
        in.seekg(pos);
      }
    } else {
      in.clear();
    }
    model.fold_models.push_back(std::move(m));
  }
  return model;
}

inline PredictionModel read_knn_model(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RCPM", 4) != 0)
    throw DomainError("model file: bad magic");
  const auto version = detail::get<std::uint8_t>(in);
  if (version != 1) throw DomainError("model file: unsupported version");
  PredictionModel model;
  model.method = static_cast<MethodKind>(detail::get<std::uint8_t>(in));
  model.uses_hidden = detail::get<std::uint8_t>(in) != 0;
  const auto folds = detail::get<std::uint32_t>(in);
  for (std::uint32_t f = 0; f < folds; ++f) {
    regress::FittedRegressor m;
    m.family = regress::Family::knn;
    const auto rows = detail::get<std::uint32_t>(in);
    const auto cols = detail::get<std::uint32_t>(in);
    m.n_features_in = detail::get<std::uint32_t>(in);
    m.neighbors = static_cast<int>(detail::get<std::uint32_t>(in));
    const auto subset_len = detail::get<std::uint32_t>(in);
    for (std::uint32_t j = 0; j < subset_len; ++j)
      m.feature_subset.push_back(
          static_cast<Eigen::Index>(detail::get<std::int64_t>(in)));
    m.column_center.resize(cols);
    m.column_scale.resize(cols);
    for (std::uint32_t j = 0; j < cols; ++j)
      m.column_center(j) = detail::get<double>(in);
    for (std::uint32_t j = 0; j < cols; ++j)
      m.column_scale(j) = detail::get<double>(in);
    m.train_x.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j)
        m.train_x(i, j) = detail::get<double>(in);
    m.train_y.resize(rows);
    for (std::uint32_t i = 0; i < rows; ++i)
      m.train_y(i) = detail::get<double>(in);
    model.fold_models.push_back(std::move(m));
  }
  return model;
}

inline PredictionModel read_model(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error("cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, "RCPM", 4) == 0) {
    std::ifstream in(path, std::ios::binary);
    return read_knn_model(in);
  }
  std::ifstream in(path);
  std::string first_line;
  if (!std::getline(in, first_line)) throw DomainError("model file empty");
  return read_lasso_model(in, first_line);
}

}  // namespace rcpred::model_io
