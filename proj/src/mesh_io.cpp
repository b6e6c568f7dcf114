#include "meshflow/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "meshflow/error.hpp"

namespace meshflow {
namespace {

constexpr int kDigits = 9;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string_view strip_comment(std::string_view line) {
  auto pos = line.find('#');
  return pos == std::string_view::npos ? line : line.substr(0, pos);
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("expected a number, got '" + std::string(token) + "'", line);
  }
  return value;
}

long long parse_int(std::string_view token, std::size_t line) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("expected an integer, got '" + std::string(token) + "'", line);
  }
  return value;
}

void format_coord(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.*g", kDigits, v);
  out.append(buf, static_cast<std::size_t>(n));
}

void append_point(std::string& out, const Vec3& p) {
  format_coord(out, p[0]);
  out.push_back(' ');
  format_coord(out, p[1]);
  out.push_back(' ');
  format_coord(out, p[2]);
}

std::string lower_ext(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

Mesh read_obj(std::istream& in) {
  Mesh mesh;
  std::string raw;
  std::size_t line_no = 0;
  struct PendingFace {
    std::array<long long, 3> idx;
    std::size_t line;
  };
  std::vector<PendingFace> pending;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = split_ws(strip_comment(raw));
    if (tokens.empty()) continue;
    const auto tag = tokens[0];
    if (tag == "v") {
      if (tokens.size() < 4 || tokens.size() > 5) {
        throw ParseError("vertex record needs 3 coordinates", line_no);
      }
      mesh.vertices.push_back({parse_double(tokens[1], line_no),
                               parse_double(tokens[2], line_no),
                               parse_double(tokens[3], line_no)});
    } else if (tag == "f") {
      if (tokens.size() < 4) throw ParseError("face record needs 3 indices", line_no);
      if (tokens.size() > 4) {
        throw UnsupportedTopologyError("line " + std::to_string(line_no) +
                                       ": face with " +
                                       std::to_string(tokens.size() - 1) +
                                       " vertices; only triangles are supported");
      }
      PendingFace f{{}, line_no};
      for (int k = 0; k < 3; ++k) {
        auto tok = tokens[k + 1];
        tok = tok.substr(0, tok.find('/'));  // drop /vt/vn
        f.idx[k] = parse_int(tok, line_no);
      }
      pending.push_back(f);
    }
    // vt, vn, g, o, s, usemtl, mtllib and friends are ignored.
  }
  const auto n = static_cast<long long>(mesh.vertices.size());
  mesh.faces.reserve(pending.size());
  for (const auto& f : pending) {
    Face face{};
    for (int k = 0; k < 3; ++k) {
      long long i = f.idx[k];
      // Negative indices count back from the end of the vertex list.
      i = i < 0 ? n + i : i - 1;
      if (i < 0 || i >= n) throw ParseError("face index out of range", f.line);
      face[k] = static_cast<std::uint32_t>(i);
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw UnsupportedTopologyError("line " + std::to_string(f.line) +
                                     ": degenerate face");
    }
    mesh.faces.push_back(face);
  }
  validate_mesh(mesh);
  return mesh;
}

Mesh read_off(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  // Views into `raw`; only valid until the next call to `next`.
  std::vector<std::string_view> tokens;

  // Yields the next non-empty, comment-stripped line split into tokens.
  auto next = [&]() -> bool {
    while (std::getline(in, raw)) {
      ++line_no;
      tokens = split_ws(strip_comment(raw));
      if (!tokens.empty()) return true;
    }
    return false;
  };

  if (!next() || tokens[0] != "OFF") throw ParseError("missing OFF header", line_no);
  std::size_t first = 1;
  if (tokens.size() == 1) {
    if (!next()) throw ParseError("missing OFF counts", line_no);
    first = 0;
  }
  if (tokens.size() < first + 2) throw ParseError("OFF counts need V and F", line_no);
  const auto nv = parse_int(tokens[first], line_no);
  const auto nf = parse_int(tokens[first + 1], line_no);
  if (nv < 0 || nf < 0) throw ParseError("negative OFF counts", line_no);

  Mesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!next()) throw ParseError("unexpected end of file in vertex list", line_no);
    if (tokens.size() < 3) throw ParseError("vertex needs 3 coordinates", line_no);
    mesh.vertices.push_back({parse_double(tokens[0], line_no),
                             parse_double(tokens[1], line_no),
                             parse_double(tokens[2], line_no)});
  }
  mesh.faces.reserve(static_cast<std::size_t>(nf));
  for (long long i = 0; i < nf; ++i) {
    if (!next()) throw ParseError("unexpected end of file in face list", line_no);
    const auto arity = parse_int(tokens[0], line_no);
    if (arity != 3) {
      throw UnsupportedTopologyError("line " + std::to_string(line_no) +
                                     ": face with " + std::to_string(arity) +
                                     " vertices; only triangles are supported");
    }
    if (tokens.size() < 4) throw ParseError("face needs 3 indices", line_no);
    Face face{};
    for (int k = 0; k < 3; ++k) {
      const auto idx = parse_int(tokens[k + 1], line_no);
      if (idx < 0 || idx >= nv) throw ParseError("face index out of range", line_no);
      face[k] = static_cast<std::uint32_t>(idx);
    }
    mesh.faces.push_back(face);
  }
  validate_mesh(mesh);
  return mesh;
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  validate_mesh(mesh);
  std::string text;
  text.reserve(mesh.vertices.size() * 40 + mesh.faces.size() * 24);
  for (const auto& v : mesh.vertices) {
    text += "v ";
    append_point(text, v);
    text.push_back('\n');
  }
  for (const auto& f : mesh.faces) {
    text += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) +
            ' ' + std::to_string(f[2] + 1) + '\n';
  }
  out << text;
}

void write_off(std::ostream& out, const Mesh& mesh) {
  validate_mesh(mesh);
  std::string text = "OFF\n" + std::to_string(mesh.vertices.size()) + ' ' +
                     std::to_string(mesh.faces.size()) + " 0\n";
  for (const auto& v : mesh.vertices) {
    append_point(text, v);
    text.push_back('\n');
  }
  for (const auto& f : mesh.faces) {
    text += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' +
            std::to_string(f[2]) + '\n';
  }
  out << text;
}

Mesh read_mesh(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  if (ext != ".obj" && ext != ".off") {
    throw IoError("unsupported mesh extension '" + ext + "' for " + path.string());
  }
  auto in = open_in(path);
  return ext == ".obj" ? read_obj(in) : read_off(in);
}

void write_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  const auto ext = lower_ext(path);
  if (ext != ".obj" && ext != ".off") {
    throw IoError("unsupported mesh extension '" + ext + "' for " + path.string());
  }
  auto out = open_out(path);
  if (ext == ".obj") {
    write_obj(out, mesh);
  } else {
    write_off(out, mesh);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = split_ws(strip_comment(raw));
    if (tokens.empty()) continue;
    if (tokens.size() != 3) throw ParseError("expected 'x y z'", line_no);
    cloud.points.push_back({parse_double(tokens[0], line_no),
                            parse_double(tokens[1], line_no),
                            parse_double(tokens[2], line_no)});
  }
  validate_cloud(cloud);
  return cloud;
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  std::string text;
  text.reserve(cloud.size() * 40);
  for (const auto& p : cloud.points) {
    append_point(text, p);
    text.push_back('\n');
  }
  out << text;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_xyz(in);
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_xyz(out, cloud);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace meshflow
