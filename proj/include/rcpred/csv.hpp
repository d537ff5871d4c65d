#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rcpred/core.hpp"
#include "rcpred/error.hpp"

namespace rcpred::csv {

// Shortest round-trip formatting ("%.17g") so written files re-read
// bit-exactly and reruns are byte-identical.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DomainError("csv: cannot parse number '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw DomainError("csv: cannot parse integer '" + s + "'");
  return v;
}

// Header: v_1,...,v_{dV},z_1,...,z_{dZ},a,y
inline void write_table(const core::ObservationTable& table,
                        std::ostream& out) {
  const core::Index dv = table.d_v();
  const core::Index dz = table.d_z();
  for (core::Index j = 0; j < dv; ++j) out << "v_" << (j + 1) << ",";
  for (core::Index j = 0; j < dz; ++j) out << "z_" << (j + 1) << ",";
  out << "a,y\n";
  for (core::Index i = 0; i < table.n(); ++i) {
    for (core::Index j = 0; j < dv; ++j)
      out << format_double(table.v(i, j)) << ",";
    for (core::Index j = 0; j < dz; ++j)
      out << format_double(table.z(i, j)) << ",";
    out << table.a[static_cast<std::size_t>(i)] << ","
        << format_double(table.y(i)) << "\n";
  }
}

// Column counts for V and Z are inferred from the header names.
inline core::ObservationTable read_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("csv: empty input");
  const auto header = split_line(line);
  core::Index dv = 0;
  core::Index dz = 0;
  std::size_t pos = 0;
  while (pos < header.size() && header[pos].rfind("v_", 0) == 0) {
    ++dv;
    ++pos;
  }
  while (pos < header.size() && header[pos].rfind("z_", 0) == 0) {
    ++dz;
    ++pos;
  }
  if (pos + 2 != header.size() || header[pos] != "a" ||
      header[pos + 1] != "y")
    throw DomainError("csv: header must be v_*,...,z_*,...,a,y");

  std::vector<std::vector<double>> v_rows;
  std::vector<std::vector<double>> z_rows;
  std::vector<int> a;
  std::vector<double> y;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (static_cast<core::Index>(fields.size()) != dv + dz + 2)
      throw DimensionError("csv: row has " + std::to_string(fields.size()) +
                           " fields, expected " +
                           std::to_string(dv + dz + 2));
    std::vector<double> vr(static_cast<std::size_t>(dv));
    std::vector<double> zr(static_cast<std::size_t>(dz));
    for (core::Index j = 0; j < dv; ++j)
      vr[static_cast<std::size_t>(j)] =
          parse_double(fields[static_cast<std::size_t>(j)]);
    for (core::Index j = 0; j < dz; ++j)
      zr[static_cast<std::size_t>(j)] =
          parse_double(fields[static_cast<std::size_t>(dv + j)]);
    a.push_back(static_cast<int>(
        parse_long(fields[static_cast<std::size_t>(dv + dz)])));
    y.push_back(parse_double(fields[static_cast<std::size_t>(dv + dz + 1)]));
    v_rows.push_back(std::move(vr));
    z_rows.push_back(std::move(zr));
  }
  const auto n = static_cast<core::Index>(v_rows.size());
  if (n == 0) throw DomainError("csv: no data rows");

  core::ObservationTable table;
  table.v.resize(n, dv);
  table.z.resize(n, dz);
  table.y.resize(n);
  table.a = std::move(a);
  for (core::Index i = 0; i < n; ++i) {
    for (core::Index j = 0; j < dv; ++j)
      table.v(i, j) = v_rows[static_cast<std::size_t>(i)]
                            [static_cast<std::size_t>(j)];
    for (core::Index j = 0; j < dz; ++j)
      table.z(i, j) = z_rows[static_cast<std::size_t>(i)]
                            [static_cast<std::size_t>(j)];
    table.y(i) = y[static_cast<std::size_t>(i)];
  }
  core::validate(table);
  return table;
}

inline void write_table_file(const core::ObservationTable& table,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_table(table, out);
}

inline core::ObservationTable read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_table(in);
}

}  // namespace rcpred::csv
