#pragma once

#include "mrfm/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mrfm {

enum class MeshFormat { off, obj, ply };

inline MeshFormat mesh_format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".off") return MeshFormat::off;
  if (ext == ".obj") return MeshFormat::obj;
  if (ext == ".ply") return MeshFormat::ply;
  throw validation_error("unrecognised mesh extension '" + ext + "' for " + path.string());
}

namespace detail {

struct RawMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
};

inline void add_polygon(RawMesh& raw, const std::vector<int>& poly, const std::string& where) {
  if (poly.size() < 3) throw validation_error(where + ": face with fewer than 3 vertices");
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) raw.triangles.push_back({poly[0], poly[i], poly[i + 1]});
}

// Next line that is neither blank nor a '#' comment.
inline bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

inline RawMesh read_off(std::istream& in, const std::string& name) {
  std::string line;
  if (!next_content_line(in, line)) throw validation_error(name + ": empty OFF file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw validation_error(name + ": missing OFF header");
  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv)) {
    if (!next_content_line(in, line)) throw validation_error(name + ": missing OFF counts");
    std::istringstream counts(line);
    counts >> nv >> nf >> ne;
  } else {
    header >> nf >> ne;
  }
  if (nv <= 0 || nf <= 0) throw validation_error(name + ": invalid OFF vertex/face counts");

  RawMesh raw;
  raw.vertices.reserve(static_cast<std::size_t>(nv));
  for (long v = 0; v < nv; ++v) {
    if (!next_content_line(in, line)) throw validation_error(name + ": truncated vertex list");
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z()))
      throw validation_error(name + ": cannot parse vertex " + std::to_string(v));
    raw.vertices.push_back(p);
  }
  std::vector<int> poly;
  for (long f = 0; f < nf; ++f) {
    if (!next_content_line(in, line)) throw validation_error(name + ": truncated face list");
    std::istringstream ls(line);
    int count = 0;
    if (!(ls >> count) || count < 3) throw validation_error(name + ": cannot parse face " + std::to_string(f));
    poly.assign(static_cast<std::size_t>(count), 0);
    for (int& idx : poly)
      if (!(ls >> idx)) throw validation_error(name + ": cannot parse face " + std::to_string(f));
    add_polygon(raw, poly, name + " face " + std::to_string(f));
  }
  return raw;
}

inline RawMesh read_obj(std::istream& in, const std::string& name) {
  RawMesh raw;
  std::string line;
  std::vector<int> poly;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        throw validation_error(name + ":" + std::to_string(line_no) + ": cannot parse vertex");
      raw.vertices.push_back(p);
    } else if (tag == "f") {
      poly.clear();
      std::string token;
      while (ls >> token) {
        // v, v/vt, v//vn, v/vt/vn; only the position index is used.
        const std::string head = token.substr(0, token.find('/'));
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0)
          throw validation_error(name + ":" + std::to_string(line_no) + ": bad face index '" + token + "'");
        idx = idx > 0 ? idx - 1 : static_cast<int>(raw.vertices.size()) + idx;
        poly.push_back(idx);
      }
      add_polygon(raw, poly, name + ":" + std::to_string(line_no));
    }
  }
  if (raw.vertices.empty()) throw validation_error(name + ": no vertices in OBJ file");
  return raw;
}

struct PlyProperty {
  std::string name;
  std::string type;        // scalar type, or count type for lists
  std::string item_type;   // element type for lists; empty for scalars
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
      type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  throw validation_error("unsupported PLY property type '" + type + "'");
}

template <typename T>
T read_le(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  return value;
}

inline double ply_binary_value(std::istream& in, const std::string& type, const std::string& name) {
  char buf[8];
  const std::size_t size = ply_type_size(type);
  if (!in.read(buf, static_cast<std::streamsize>(size))) throw validation_error(name + ": truncated binary PLY body");
  if (type == "char" || type == "int8") return read_le<std::int8_t>(buf);
  if (type == "uchar" || type == "uint8") return read_le<std::uint8_t>(buf);
  if (type == "short" || type == "int16") return read_le<std::int16_t>(buf);
  if (type == "ushort" || type == "uint16") return read_le<std::uint16_t>(buf);
  if (type == "int" || type == "int32") return read_le<std::int32_t>(buf);
  if (type == "uint" || type == "uint32") return read_le<std::uint32_t>(buf);
  if (type == "float" || type == "float32") return read_le<float>(buf);
  return read_le<double>(buf);
}

inline RawMesh read_ply(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw validation_error(name + ": missing ply magic");
  std::string format;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      ls >> format;
    } else if (tag == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      elements.push_back(el);
    } else if (tag == "property") {
      if (elements.empty()) throw validation_error(name + ": property before element");
      PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        ls >> prop.type >> prop.item_type >> prop.name;
      } else {
        prop.type = type;
        ls >> prop.name;
      }
      elements.back().properties.push_back(prop);
    } else if (tag == "end_header") {
      break;
    }
  }
  const bool binary = format == "binary_little_endian";
  if (!binary && format != "ascii") throw validation_error(name + ": unsupported PLY format '" + format + "'");

  RawMesh raw;
  std::vector<int> poly;
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, iface = -1;
    for (std::size_t p = 0; p < el.properties.size(); ++p) {
      const auto& prop = el.properties[p];
      if (prop.name == "x") ix = static_cast<int>(p);
      if (prop.name == "y") iy = static_cast<int>(p);
      if (prop.name == "z") iz = static_cast<int>(p);
      if (!prop.item_type.empty() && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
        iface = static_cast<int>(p);
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw validation_error(name + ": vertex element lacks x/y/z");
    if (is_face && iface < 0) throw validation_error(name + ": face element lacks vertex_indices");

    std::istringstream ascii_line;
    for (long r = 0; r < el.count; ++r) {
      if (!binary) {
        if (!std::getline(in, line)) throw validation_error(name + ": truncated ASCII PLY body");
        ascii_line.clear();
        ascii_line.str(line);
      }
      auto next_value = [&](const std::string& type) -> double {
        if (binary) return ply_binary_value(in, type, name);
        double v = 0.0;
        if (!(ascii_line >> v)) throw validation_error(name + ": malformed ASCII PLY row in element " + el.name);
        return v;
      };
      Vec3 p = Vec3::Zero();
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        const auto& prop = el.properties[k];
        if (prop.item_type.empty()) {
          const double v = next_value(prop.type);
          if (static_cast<int>(k) == ix) p.x() = v;
          if (static_cast<int>(k) == iy) p.y() = v;
          if (static_cast<int>(k) == iz) p.z() = v;
        } else {
          const auto count = static_cast<long>(next_value(prop.type));
          if (count < 0) throw validation_error(name + ": negative list length");
          poly.clear();
          for (long c = 0; c < count; ++c) poly.push_back(static_cast<int>(next_value(prop.item_type)));
          if (is_face && static_cast<int>(k) == iface)
            add_polygon(raw, poly, name + " face " + std::to_string(r));
        }
      }
      if (is_vertex) raw.vertices.push_back(p);
    }
  }
  return raw;
}

}  // namespace detail

/// Loads and validates a mesh. Vertex areas are populated by `TriMesh::build`.
inline TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open mesh file " + path.string());
  const std::string name = path.string();
  detail::RawMesh raw;
  switch (format) {
    case MeshFormat::off: raw = detail::read_off(in, name); break;
    case MeshFormat::obj: raw = detail::read_obj(in, name); break;
    case MeshFormat::ply: raw = detail::read_ply(in, name); break;
  }
  try {
    return TriMesh::build(std::move(raw.vertices), std::move(raw.triangles));
  } catch (const Error& e) {
    throw Error(e.kind(), name + ": " + e.what());
  }
}

inline TriMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, mesh_format_from_path(path)); }

/// Writes OFF/OBJ as text with 17 significant digits, PLY as binary little-endian doubles.
inline void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write mesh file " + path.string());
  out << std::setprecision(17);
  const auto& V = mesh.vertices();
  const auto& F = mesh.triangles();
  switch (format) {
    case MeshFormat::off:
      out << "OFF\n" << V.size() << ' ' << F.size() << " 0\n";
      for (const auto& p : V) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
      for (const auto& t : F) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
      break;
    case MeshFormat::obj:
      for (const auto& p : V) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
      for (const auto& t : F) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
      break;
    case MeshFormat::ply: {
      out << "ply\nformat binary_little_endian 1.0\n"
          << "element vertex " << V.size() << "\nproperty double x\nproperty double y\nproperty double z\n"
          << "element face " << F.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
      for (const auto& p : V) out.write(reinterpret_cast<const char*>(p.data()), 3 * sizeof(double));
      for (const auto& t : F) {
        const std::uint8_t three = 3;
        out.write(reinterpret_cast<const char*>(&three), 1);
        const std::int32_t idx[3] = {t[0], t[1], t[2]};
        out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
      }
      break;
    }
  }
  if (!out) throw validation_error("failed writing mesh file " + path.string());
}

inline void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  save_mesh(mesh, path, mesh_format_from_path(path));
}

/// Reads one integer per line. `index_base` is 0 or 1. Line count must equal
/// `source_size` and every entry must land in [0, target_size).
inline PointwiseMap load_correspondence(const std::filesystem::path& path, Index source_size, Index target_size,
                                        int index_base = 0) {
  if (index_base != 0 && index_base != 1) throw validation_error("index base must be 0 or 1");
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open correspondence file " + path.string());
  std::vector<int> target_of;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string_view token(line.data() + first, last - first + 1);
    long value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw validation_error(path.string() + ":" + std::to_string(line_no) + ": not an integer");
    value -= index_base;
    if (value < 0 || value >= target_size)
      throw validation_error(path.string() + ":" + std::to_string(line_no) + ": index " +
                             std::to_string(value + index_base) + " out of range for target size " +
                             std::to_string(target_size));
    target_of.push_back(static_cast<int>(value));
  }
  if (static_cast<Index>(target_of.size()) != source_size)
    throw validation_error(path.string() + ": expected " + std::to_string(source_size) + " lines, found " +
                           std::to_string(target_of.size()));
  return PointwiseMap::build(std::move(target_of), target_size);
}

inline void save_correspondence(const PointwiseMap& map, const std::filesystem::path& path, int index_base = 0) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write correspondence file " + path.string());
  for (int t : map.target_of) out << t + index_base << '\n';
}

}  // namespace mrfm
