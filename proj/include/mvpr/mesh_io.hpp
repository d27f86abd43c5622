#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>

#include "mvpr/mesh.hpp"

namespace mvpr {

// Material name -> face color. Text format, one entry per line: "name r g b".
using Palette = std::map<std::string, Rgb>;

Palette parse_palette(std::istream& in);
std::string format_palette(const Palette& palette);

// OBJ subset: "v x y z", "f i j k ..." (1-based or negative, slash forms
// accepted, polygons fan-triangulated), "usemtl name" resolved through the
// palette, and an optional "# geo_anchor lat lon" comment.
TriangleMesh parse_obj(std::istream& in, const Palette& palette = {});

// Writes the OBJ text and fills `palette` with the generated material names.
std::string format_obj(const TriangleMesh& mesh, Palette& palette);

// Binary little-endian PLY. Vertex x/y/z are written as float32, so only
// float-representable coordinates survive a round trip exactly. Optional
// per-face red/green/blue uchar properties carry face colors.
TriangleMesh parse_ply(const std::string& bytes);
std::string format_ply(const TriangleMesh& mesh);

// Path-based entry points. OBJ palettes live next to the mesh with the
// extension replaced by ".palette".
std::filesystem::path palette_path_for(const std::filesystem::path& obj_path);
TriangleMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace mvpr
