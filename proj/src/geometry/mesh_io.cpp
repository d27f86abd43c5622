#include "mvpr/mesh_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"

namespace mvpr {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(where + ": bad number '" + tok + "'");
  }
  return v;
}

long long parse_int(const std::string& tok, const std::string& where) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(where + ": bad integer '" + tok + "'");
  }
  return v;
}

std::string hex_name(Rgb c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c_%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace

Palette parse_palette(std::istream& in) {
  Palette palette;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name[0] == '#') continue;
    int r = -1, g = -1, b = -1;
    if (!(ls >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw ParseError("palette line " + std::to_string(line_no) + ": expected 'name r g b'");
    }
    palette[name] = Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                        static_cast<std::uint8_t>(b)};
  }
  return palette;
}

std::string format_palette(const Palette& palette) {
  std::string out;
  for (const auto& [name, c] : palette) {
    out += name + " " + std::to_string(c.r) + " " + std::to_string(c.g) + " " +
           std::to_string(c.b) + "\n";
  }
  return out;
}

TriangleMesh parse_obj(std::istream& in, const Palette& palette) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Rgb> colors;
  bool any_material = false;
  Rgb current = Rgb{200, 200, 200};
  GeoPoint anchor{};

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "obj line " + std::to_string(line_no);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "#") {
      std::string tag;
      if (ls >> tag && tag == "geo_anchor") {
        std::string lat, lon;
        if (!(ls >> lat >> lon)) throw ParseError(where + ": geo_anchor needs lat lon");
        anchor = {parse_double(lat, where), parse_double(lon, where)};
      }
    } else if (key == "v") {
      std::string x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(where + ": vertex needs 3 coordinates");
      vertices.push_back({parse_double(x, where), parse_double(y, where), parse_double(z, where)});
    } else if (key == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ls >> tok) {
        const long long raw = parse_int(tok.substr(0, tok.find('/')), where);
        const long long n = static_cast<long long>(vertices.size());
        const long long idx = raw > 0 ? raw - 1 : n + raw;
        if (raw == 0 || idx < 0 || idx >= n) {
          throw ParseError(where + ": vertex index " + std::to_string(raw) + " out of range");
        }
        poly.push_back(static_cast<std::uint32_t>(idx));
      }
      if (poly.size() < 3) throw ParseError(where + ": face needs at least 3 vertices");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        triangles.push_back({poly[0], poly[k], poly[k + 1]});
        colors.push_back(current);
      }
    } else if (key == "usemtl") {
      std::string name;
      ls >> name;
      const auto it = palette.find(name);
      if (it == palette.end()) throw ParseError(where + ": material '" + name + "' not in palette");
      current = it->second;
      any_material = true;
    }
    // Other statements (vn, vt, o, g, s, mtllib) carry nothing we use.
  }
  if (!any_material) colors.clear();
  try {
    return TriangleMesh(std::move(vertices), std::move(triangles), std::move(colors), anchor);
  } catch (const RejectedInput& e) {
    throw ParseError(std::string("obj: ") + e.what());
  }
}

std::string format_obj(const TriangleMesh& mesh, Palette& palette) {
  std::string out;
  const auto anchor = mesh.geo_anchor();
  out += "# geo_anchor " + format_double(anchor.lat) + " " + format_double(anchor.lon) + "\n";
  for (const auto& v : mesh.vertices()) {
    out += "v " + format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z) + "\n";
  }
  const auto& colors = mesh.face_colors();
  std::string active;
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    if (!colors.empty()) {
      const auto name = hex_name(colors[i]);
      palette[name] = colors[i];
      if (name != active) {
        out += "usemtl " + name + "\n";
        active = name;
      }
    }
    const auto& t = mesh.triangles()[i];
    out += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " +
           std::to_string(t[2] + 1) + "\n";
  }
  return out;
}

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  throw ParseError("ply: unknown property type '" + name + "'");
}

double read_scalar(ByteReader& r, PlyType t) {
  switch (t) {
    case PlyType::i8: return r.get<std::int8_t>();
    case PlyType::u8: return r.get<std::uint8_t>();
    case PlyType::i16: return r.get<std::int16_t>();
    case PlyType::u16: return r.get<std::uint16_t>();
    case PlyType::i32: return r.get<std::int32_t>();
    case PlyType::u32: return r.get<std::uint32_t>();
    case PlyType::f32: return r.get<float>();
    case PlyType::f64: return r.get<double>();
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
  PlyType value_type = PlyType::f32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

}  // namespace

TriangleMesh parse_ply(const std::string& bytes) {
  const auto header_end = bytes.find("end_header");
  if (bytes.rfind("ply", 0) != 0 || header_end == std::string::npos) {
    throw ParseError("ply: missing header");
  }
  auto body_start = bytes.find('\n', header_end);
  if (body_start == std::string::npos) throw ParseError("ply: truncated header");
  ++body_start;

  std::istringstream header(bytes.substr(0, header_end));
  std::vector<PlyElement> elements;
  GeoPoint anchor{};
  std::string line;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw ParseError("ply: unsupported format '" + fmt + "'");
    } else if (key == "comment") {
      std::string tag, lat, lon;
      if (ls >> tag && tag == "geo_anchor" && ls >> lat >> lon) {
        anchor = {parse_double(lat, "ply header"), parse_double(lon, "ply header")};
      }
    } else if (key == "element") {
      PlyElement e;
      std::string count;
      if (!(ls >> e.name >> count)) throw ParseError("ply: bad element line");
      const auto n = parse_int(count, "ply header");
      if (n < 0) throw ParseError("ply: negative element count");
      e.count = static_cast<std::size_t>(n);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw ParseError("ply: property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, vt;
        ls >> ct >> vt;
        p.is_list = true;
        p.count_type = ply_type(ct);
        p.value_type = ply_type(vt);
      } else {
        p.value_type = ply_type(type);
      }
      if (!(ls >> p.name)) throw ParseError("ply: property without name");
      elements.back().properties.push_back(p);
    }
  }

  ByteReader r(std::string_view(bytes).substr(body_start), "ply");
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Rgb> colors;
  bool has_colors = false;

  for (const auto& e : elements) {
    // Cheap sanity bound so a corrupt count cannot trigger a huge allocation.
    if (e.count > r.remaining()) throw ParseError("ply: element count exceeds file size");
    if (e.name == "vertex") vertices.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 v;
      Rgb c{200, 200, 200};
      std::vector<std::uint32_t> poly;
      for (const auto& p : e.properties) {
        if (p.is_list) {
          const double n = read_scalar(r, p.count_type);
          if (n < 0 || n > 1e6) throw ParseError("ply: bad list length");
          for (int k = 0; k < static_cast<int>(n); ++k) {
            const double idx = read_scalar(r, p.value_type);
            if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
              if (idx < 0) throw ParseError("ply: negative vertex index");
              poly.push_back(static_cast<std::uint32_t>(idx));
            }
          }
          continue;
        }
        const double val = read_scalar(r, p.value_type);
        if (e.name == "vertex") {
          if (p.name == "x") v.x = val;
          if (p.name == "y") v.y = val;
          if (p.name == "z") v.z = val;
        } else if (e.name == "face") {
          if (p.name == "red") c.r = static_cast<std::uint8_t>(val), has_colors = true;
          if (p.name == "green") c.g = static_cast<std::uint8_t>(val), has_colors = true;
          if (p.name == "blue") c.b = static_cast<std::uint8_t>(val), has_colors = true;
        }
      }
      if (e.name == "vertex") {
        vertices.push_back(v);
      } else if (e.name == "face") {
        if (poly.size() < 3) throw ParseError("ply: face with fewer than 3 vertices");
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
          triangles.push_back({poly[0], poly[k], poly[k + 1]});
          colors.push_back(c);
        }
      }
    }
  }
  if (!has_colors) colors.clear();
  try {
    return TriangleMesh(std::move(vertices), std::move(triangles), std::move(colors), anchor);
  } catch (const RejectedInput& e) {
    throw ParseError(std::string("ply: ") + e.what());
  }
}

std::string format_ply(const TriangleMesh& mesh) {
  const bool colored = !mesh.face_colors().empty();
  std::string header = "ply\nformat binary_little_endian 1.0\n";
  header += "comment geo_anchor " + format_double(mesh.geo_anchor().lat) + " " +
            format_double(mesh.geo_anchor().lon) + "\n";
  header += "element vertex " + std::to_string(mesh.vertices().size()) + "\n";
  header += "property float x\nproperty float y\nproperty float z\n";
  header += "element face " + std::to_string(mesh.triangle_count()) + "\n";
  header += "property list uchar int vertex_indices\n";
  if (colored) header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  header += "end_header\n";

  ByteWriter w;
  w.put_bytes(header);
  for (const auto& v : mesh.vertices()) {
    w.put(static_cast<float>(v.x));
    w.put(static_cast<float>(v.y));
    w.put(static_cast<float>(v.z));
  }
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    w.put(std::uint8_t{3});
    for (auto idx : mesh.triangles()[i]) w.put(static_cast<std::int32_t>(idx));
    if (colored) {
      const auto c = mesh.face_colors()[i];
      w.put(c.r);
      w.put(c.g);
      w.put(c.b);
    }
  }
  return w.take();
}

std::filesystem::path palette_path_for(const std::filesystem::path& obj_path) {
  auto p = obj_path;
  p.replace_extension(".palette");
  return p;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") {
    try {
      return parse_ply(read_file(path));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  if (ext == ".obj") {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    Palette palette;
    if (std::ifstream pin(palette_path_for(path)); pin) palette = parse_palette(pin);
    try {
      return parse_obj(in, palette);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  throw RejectedInput("unsupported mesh extension '" + ext + "'");
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") {
    write_file(path, format_ply(mesh));
  } else if (ext == ".obj") {
    Palette palette;
    write_file(path, format_obj(mesh, palette));
    if (!palette.empty()) write_file(palette_path_for(path), format_palette(palette));
  } else {
    throw RejectedInput("unsupported mesh extension '" + ext + "'");
  }
}

}  // namespace mvpr
