#pragma once

// Mesh file I/O (ASCII/binary PLY, OBJ; triangles only) and the cohort
// manifest. Vertex order is preserved exactly; ASCII floats are written with
// shortest round-trip formatting so save/load is bit-exact in both formats.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssmkit/mesh_core.hpp"

namespace ssmkit {

enum class MeshFormat { ply, obj };

inline MeshFormat mesh_format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".ply") return MeshFormat::ply;
  if (ext == ".obj") return MeshFormat::obj;
  throw IoError("cannot infer mesh format from extension: " + path.string());
}

namespace detail {

inline double parse_double(const std::string& tok, const std::string& ctx) {
  double v;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw IoError("failed to parse number '" + tok + "' in " + ctx);
  return v;
}

inline long parse_long(const std::string& tok, const std::string& ctx) {
  long v;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw IoError("failed to parse integer '" + tok + "' in " + ctx);
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

struct PlyProperty {
  std::string type;
  std::string name;
  bool is_list = false;
  std::string count_type;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw IoError("unsupported PLY property type: " + t);
}

inline double ply_read_scalar(std::istream& in, const std::string& type, const std::string& ctx) {
  unsigned char buf[8];
  std::size_t n = ply_type_size(type);
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
    throw IoError("unexpected end of binary data in " + ctx);
  auto as = [&](auto v) {
    std::memcpy(&v, buf, sizeof(v));
    return static_cast<double>(v);
  };
  if (type == "char" || type == "int8") return as(std::int8_t{});
  if (type == "uchar" || type == "uint8") return as(std::uint8_t{});
  if (type == "short" || type == "int16") return as(std::int16_t{});
  if (type == "ushort" || type == "uint16") return as(std::uint16_t{});
  if (type == "int" || type == "int32") return as(std::int32_t{});
  if (type == "uint" || type == "uint32") return as(std::uint32_t{});
  if (type == "float" || type == "float32") return as(float{});
  return as(double{});
}

}  // namespace detail

inline SurfaceMesh load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mesh file: " + path.string());

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw IoError(path.string() + ": not a PLY file (missing 'ply' magic)");

  bool binary = false;
  struct Element {
    std::string name;
    long count = 0;
    std::vector<detail::PlyProperty> props;
  };
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = detail::split_ws(line);
    if (toks.empty() || toks[0] == "comment") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2) throw IoError(path.string() + ": malformed format line");
      if (toks[1] == "ascii")
        binary = false;
      else if (toks[1] == "binary_little_endian")
        binary = true;
      else
        throw IoError(path.string() + ": unsupported PLY format " + toks[1]);
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw IoError(path.string() + ": malformed element line");
      elements.push_back({toks[1], detail::parse_long(toks[2], "PLY header"), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) throw IoError(path.string() + ": property before element");
      detail::PlyProperty p;
      if (toks.size() == 5 && toks[1] == "list") {
        p.is_list = true;
        p.count_type = toks[2];
        p.type = toks[3];
        p.name = toks[4];
      } else if (toks.size() == 3) {
        p.type = toks[1];
        p.name = toks[2];
      } else {
        throw IoError(path.string() + ": malformed property line: " + line);
      }
      elements.back().props.push_back(p);
    } else if (toks[0] == "end_header") {
      break;
    }
  }

  SurfaceMesh mesh;
  mesh.subject_id = path.stem().string();
  std::vector<MatI::Scalar> face_data;
  long n_faces = 0;

  for (const auto& el : elements) {
    if (el.name == "vertex") {
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        if (el.props[p].is_list) throw IoError(path.string() + ": list property on vertex element");
        if (el.props[p].name == "x") ix = static_cast<int>(p);
        if (el.props[p].name == "y") iy = static_cast<int>(p);
        if (el.props[p].name == "z") iz = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0)
        throw IoError(path.string() + ": vertex element lacks x/y/z properties");
      mesh.vertices.resize(el.count, 3);
      for (long v = 0; v < el.count; ++v) {
        std::string ctx = path.string() + " vertex " + std::to_string(v);
        if (binary) {
          for (std::size_t p = 0; p < el.props.size(); ++p) {
            double x = detail::ply_read_scalar(in, el.props[p].type, ctx);
            if (static_cast<int>(p) == ix) mesh.vertices(v, 0) = x;
            if (static_cast<int>(p) == iy) mesh.vertices(v, 1) = x;
            if (static_cast<int>(p) == iz) mesh.vertices(v, 2) = x;
          }
        } else {
          if (!std::getline(in, line)) throw IoError("unexpected end of file in " + ctx);
          auto toks = detail::split_ws(line);
          if (toks.size() < el.props.size()) throw IoError("too few values in " + ctx);
          mesh.vertices(v, 0) = detail::parse_double(toks[static_cast<std::size_t>(ix)], ctx);
          mesh.vertices(v, 1) = detail::parse_double(toks[static_cast<std::size_t>(iy)], ctx);
          mesh.vertices(v, 2) = detail::parse_double(toks[static_cast<std::size_t>(iz)], ctx);
        }
      }
    } else if (el.name == "face") {
      if (el.props.size() != 1 || !el.props[0].is_list)
        throw IoError(path.string() + ": face element must have a single list property");
      n_faces = el.count;
      face_data.reserve(static_cast<std::size_t>(el.count) * 3);
      for (long f = 0; f < el.count; ++f) {
        std::string ctx = path.string() + " face " + std::to_string(f);
        long cnt;
        std::vector<long> idx;
        if (binary) {
          cnt = static_cast<long>(detail::ply_read_scalar(in, el.props[0].count_type, ctx));
          for (long i = 0; i < cnt; ++i)
            idx.push_back(static_cast<long>(detail::ply_read_scalar(in, el.props[0].type, ctx)));
        } else {
          if (!std::getline(in, line)) throw IoError("unexpected end of file in " + ctx);
          auto toks = detail::split_ws(line);
          if (toks.empty()) throw IoError("empty face line in " + ctx);
          cnt = detail::parse_long(toks[0], ctx);
          if (static_cast<long>(toks.size()) != cnt + 1) throw IoError("bad face line in " + ctx);
          for (long i = 1; i <= cnt; ++i) idx.push_back(detail::parse_long(toks[static_cast<std::size_t>(i)], ctx));
        }
        if (cnt != 3)
          throw IoError(ctx + ": non-triangular face with " + std::to_string(cnt) + " vertices");
        for (long v : idx) face_data.push_back(static_cast<MatI::Scalar>(v));
      }
    } else {
      throw IoError(path.string() + ": unsupported PLY element '" + el.name + "'");
    }
  }

  mesh.faces.resize(n_faces, 3);
  for (long f = 0; f < n_faces; ++f)
    for (int c = 0; c < 3; ++c) mesh.faces(f, c) = face_data[static_cast<std::size_t>(f * 3 + c)];
  validate_mesh(mesh);
  return mesh;
}

inline SurfaceMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path.string());
  SurfaceMesh mesh;
  mesh.subject_id = path.stem().string();
  std::vector<double> verts;
  std::vector<MatI::Scalar> faces;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = detail::split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    std::string ctx = path.string() + ":" + std::to_string(lineno);
    if (toks[0] == "v") {
      if (toks.size() < 4) throw IoError(ctx + ": vertex line needs 3 coordinates");
      for (int c = 1; c <= 3; ++c) verts.push_back(detail::parse_double(toks[static_cast<std::size_t>(c)], ctx));
    } else if (toks[0] == "f") {
      if (toks.size() != 4)
        throw IoError(ctx + ": non-triangular face with " + std::to_string(toks.size() - 1) +
                      " vertices");
      for (int c = 1; c <= 3; ++c) {
        std::string tok = toks[static_cast<std::size_t>(c)];
        auto slash = tok.find('/');
        if (slash != std::string::npos) tok = tok.substr(0, slash);
        long idx = detail::parse_long(tok, ctx);
        if (idx <= 0) throw IoError(ctx + ": unsupported face index " + std::to_string(idx));
        faces.push_back(static_cast<MatI::Scalar>(idx - 1));
      }
    }
    // all other directives (vn, vt, o, g, s, usemtl, ...) are ignored
  }
  mesh.vertices = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
                      verts.data(), static_cast<long>(verts.size() / 3), 3)
                      .cast<double>();
  mesh.faces.resize(static_cast<long>(faces.size() / 3), 3);
  for (long f = 0; f < mesh.faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) mesh.faces(f, c) = faces[static_cast<std::size_t>(f * 3 + c)];
  validate_mesh(mesh);
  return mesh;
}

inline SurfaceMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  return format == MeshFormat::ply ? load_ply(path) : load_obj(path);
}

inline SurfaceMesh load_mesh(const std::filesystem::path& path) {
  return load_mesh(path, mesh_format_from_path(path));
}

enum class PlyEncoding { ascii, binary };

inline void save_ply(const SurfaceMesh& mesh, const std::filesystem::path& path,
                     PlyEncoding enc = PlyEncoding::binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  out << "ply\n"
      << (enc == PlyEncoding::binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << mesh.vertex_count() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.face_count() << "\n"
      << "property list uchar int vertex_indices\n"
      << "end_header\n";
  if (enc == PlyEncoding::binary) {
    for (long v = 0; v < mesh.vertex_count(); ++v)
      for (int c = 0; c < 3; ++c) {
        double x = mesh.vertices(v, c);
        out.write(reinterpret_cast<const char*>(&x), sizeof(x));
      }
    for (long f = 0; f < mesh.face_count(); ++f) {
      unsigned char n = 3;
      out.write(reinterpret_cast<const char*>(&n), 1);
      for (int c = 0; c < 3; ++c) {
        std::int32_t idx = mesh.faces(f, c);
        out.write(reinterpret_cast<const char*>(&idx), sizeof(idx));
      }
    }
  } else {
    for (long v = 0; v < mesh.vertex_count(); ++v)
      out << fmt_double(mesh.vertices(v, 0)) << ' ' << fmt_double(mesh.vertices(v, 1)) << ' '
          << fmt_double(mesh.vertices(v, 2)) << '\n';
    for (long f = 0; f < mesh.face_count(); ++f)
      out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void save_obj(const SurfaceMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  for (long v = 0; v < mesh.vertex_count(); ++v)
    out << "v " << fmt_double(mesh.vertices(v, 0)) << ' ' << fmt_double(mesh.vertices(v, 1)) << ' '
        << fmt_double(mesh.vertices(v, 2)) << '\n';
  for (long f = 0; f < mesh.face_count(); ++f)
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline void save_mesh(const SurfaceMesh& mesh, const std::filesystem::path& path,
                      MeshFormat format, PlyEncoding enc = PlyEncoding::binary) {
  if (format == MeshFormat::ply)
    save_ply(mesh, path, enc);
  else
    save_obj(mesh, path);
}

// ---- cohort manifest ----

struct ManifestEntry {
  std::string path;
  std::string subject_id;
  Split split = Split::train;
  std::string group_label;  // optional
};

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest parse error in " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw IoError("manifest must be a JSON array: " + path.string());
  std::vector<ManifestEntry> out;
  for (const auto& item : j) {
    ManifestEntry e;
    if (!item.contains("path") || !item.contains("subject_id") || !item.contains("split"))
      throw IoError("manifest entry missing path/subject_id/split in " + path.string());
    e.path = item["path"].get<std::string>();
    e.subject_id = item["subject_id"].get<std::string>();
    e.split = split_from_string(item["split"].get<std::string>());
    if (item.contains("group_label")) e.group_label = item["group_label"].get<std::string>();
    out.push_back(e);
  }
  return out;
}

inline void save_manifest(const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item = {{"path", e.path}, {"subject_id", e.subject_id},
                           {"split", to_string(e.split)}};
    if (!e.group_label.empty()) item["group_label"] = e.group_label;
    j.push_back(item);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

/// Load every mesh in the manifest; relative paths resolve against the
/// manifest's directory.
inline Cohort load_cohort(const std::filesystem::path& manifest_path) {
  auto entries = load_manifest(manifest_path);
  auto base = manifest_path.parent_path();
  Cohort cohort;
  for (const auto& e : entries) {
    std::filesystem::path p = e.path;
    if (p.is_relative()) p = base / p;
    SurfaceMesh mesh = load_mesh(p);
    mesh.subject_id = e.subject_id;
    cohort.meshes.push_back(std::move(mesh));
    cohort.split.push_back(e.split);
    cohort.group_label.push_back(e.group_label);
  }
  return cohort;
}

}  // namespace ssmkit
