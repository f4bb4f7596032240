#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rhm/render/render.hpp"

namespace rhm::render {

void save_obj(const std::string& path, const TexturedMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_obj: cannot open " + path);
  char buf[256];
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2),
                  mesh.colors(i, 0), mesh.colors(i, 1), mesh.colors(i, 2));
    out << buf;
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
  if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

TexturedMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_obj: cannot open " + path);
  std::vector<Eigen::Vector3d> verts, cols;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z, r = 0.5, g = 0.5, b = 0.5;
      if (!(ss >> x >> y >> z)) {
        throw std::runtime_error("load_obj: " + path + ": bad vertex at line " +
                                 std::to_string(lineno));
      }
      ss >> r >> g >> b;  // color triple optional, defaults to gray
      verts.push_back({x, y, z});
      cols.push_back({r, g, b});
    } else if (tag == "f") {
      std::array<int, 3> f;
      for (int k = 0; k < 3; ++k) {
        std::string cell;
        if (!(ss >> cell)) {
          throw std::runtime_error("load_obj: " + path + ": bad face at line " +
                                   std::to_string(lineno));
        }
        f[k] = std::stoi(cell) - 1;  // ignores /vt/vn suffixes
      }
      faces.push_back(f);
    }
  }
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= (int)verts.size()) {
        throw std::runtime_error("load_obj: " + path + ": face index " +
                                 std::to_string(f[k] + 1) + " out of range");
      }
    }
  }
  TexturedMesh mesh;
  mesh.vertices.resize((int)verts.size(), 3);
  mesh.colors.resize((int)verts.size(), 3);
  for (size_t i = 0; i < verts.size(); ++i) {
    mesh.vertices.row((int)i) = verts[i];
    mesh.colors.row((int)i) = cols[i];
  }
  mesh.faces = std::move(faces);
  return mesh;
}

}  // namespace rhm::render
