#pragma once

// ShapeWorks-compatible .particles files: M lines of "x y z" in template
// order, shortest round-trip formatting.

#include <filesystem>
#include <fstream>

#include "ssmkit/deformer.hpp"

namespace ssmkit::io {

inline void save_particles(const CorrespondenceSet& corr, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write particles file: " + path.string());
  for (long i = 0; i < corr.points.rows(); ++i)
    out << fmt_double(corr.points(i, 0)) << ' ' << fmt_double(corr.points(i, 1)) << ' '
        << fmt_double(corr.points(i, 2)) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline CorrespondenceSet load_particles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open particles file: " + path.string());
  std::vector<double> vals;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected three coordinates");
    vals.push_back(x);
    vals.push_back(y);
    vals.push_back(z);
  }
  if (vals.empty()) throw IoError("empty particles file: " + path.string());
  CorrespondenceSet corr;
  corr.points.resize(static_cast<long>(vals.size() / 3), 3);
  for (long i = 0; i < corr.points.rows(); ++i)
    for (int c = 0; c < 3; ++c) corr.points(i, c) = vals[static_cast<std::size_t>(i * 3 + c)];
  corr.subject_id = path.stem().string();
  corr.projected = true;
  return corr;
}

}  // namespace ssmkit::io
