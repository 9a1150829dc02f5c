#include "bidomain/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "bidomain/errors.hpp"
#include "text_util.hpp"

namespace bidomain {

namespace {

using EdgeKey = std::pair<Index, Index>;

EdgeKey edge_key(Index a, Index b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct EdgeUse {
  int total = 0;
  int tissue = 0;
  Index first_triangle = 0;
  // Orientation as seen from the first (tissue) triangle using the edge.
  Index a = 0, b = 0;
  Index tissue_a = 0, tissue_b = 0;
};

std::map<EdgeKey, EdgeUse> collect_edges(const std::vector<Triangle>& triangles, std::size_t nv) {
  std::map<EdgeKey, EdgeUse> edges;
  for (Index t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    if (tri.v[0] >= nv || tri.v[1] >= nv || tri.v[2] >= nv) continue;
    for (int k = 0; k < 3; ++k) {
      const Index a = tri.v[k];
      const Index b = tri.v[(k + 1) % 3];
      auto& use = edges[edge_key(a, b)];
      if (use.total == 0) {
        use.first_triangle = t;
        use.a = a;
        use.b = b;
      }
      ++use.total;
      if (tri.region == Region::Tissue) {
        if (use.tissue == 0) {
          use.tissue_a = a;
          use.tissue_b = b;
        }
        ++use.tissue;
      }
    }
  }
  return edges;
}

bool point_strictly_inside_segment(const Point& p, const Point& a, const Point& b) {
  const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
  if (len2 == 0.0) return false;
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (std::abs(cross) > 1e-12 * len2) return false;
  const double t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2;
  return t > 1e-12 && t < 1.0 - 1e-12;
}

// Ring-based disk triangulation shared by the plain and nested generators.
// radii[0] must be 0 (the center vertex); band k lies between radii[k] and
// radii[k+1] and carries band_region[k].
TriMesh build_ring_mesh(const std::vector<double>& radii, const std::vector<Region>& band_region,
                        double h) {
  std::vector<Point> vertices;
  std::vector<Triangle> triangles;
  vertices.push_back({0.0, 0.0});

  std::vector<Index> ring_start(radii.size(), 0);
  std::vector<std::size_t> ring_count(radii.size(), 1);
  for (std::size_t i = 1; i < radii.size(); ++i) {
    const double r = radii[i];
    const auto n = std::max<std::size_t>(
        6, static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi * r / h - 1e-9)));
    ring_start[i] = vertices.size();
    ring_count[i] = n;
    for (std::size_t k = 0; k < n; ++k) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      vertices.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
  }

  // Center fan.
  {
    const std::size_t n = ring_count[1];
    for (std::size_t k = 0; k < n; ++k) {
      triangles.push_back(
          {{0, ring_start[1] + k, ring_start[1] + (k + 1) % n}, band_region[0]});
    }
  }

  auto dist2 = [&vertices](Index a, Index b) {
    const double dx = vertices[a].x - vertices[b].x;
    const double dy = vertices[a].y - vertices[b].y;
    return dx * dx + dy * dy;
  };

  // Zip consecutive rings, always closing the quad with the shorter diagonal.
  for (std::size_t ring = 1; ring + 1 < radii.size(); ++ring) {
    const std::size_t na = ring_count[ring];
    const std::size_t nb = ring_count[ring + 1];
    const Index sa = ring_start[ring];
    const Index sb = ring_start[ring + 1];
    const Region region = band_region[ring];
    std::size_t i = 0, j = 0;
    while (i < na || j < nb) {
      bool advance_outer = j < nb;
      if (i < na && j < nb) {
        advance_outer = dist2(sa + i, sb + (j + 1) % nb) <= dist2(sb + j, sa + (i + 1) % na);
      }
      if (advance_outer) {
        triangles.push_back({{sa + i % na, sb + j, sb + (j + 1) % nb}, region});
        ++j;
      } else {
        triangles.push_back({{sa + i, sb + j % nb, sa + (i + 1) % na}, region});
        ++i;
      }
    }
  }
  return TriMesh(std::move(vertices), std::move(triangles));
}

std::vector<double> subdivide(double a, double b, double h) {
  std::vector<double> out;
  if (b <= a) return out;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a) / h - 1e-9)));
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n));
  }
  return out;
}

std::vector<double> grid_lines(double o0, double i0, double i1, double o1, double h) {
  std::vector<double> lines;
  for (double v : subdivide(o0, i0, h)) lines.push_back(v);
  for (double v : subdivide(i0, i1, h)) lines.push_back(v);
  for (double v : subdivide(i1, o1, h)) lines.push_back(v);
  lines.push_back(o1);
  return lines;
}

void throw_if_invalid(const TriMesh& mesh) {
  const auto violations = validate(mesh);
  if (violations.empty()) return;
  std::string msg = "mesh invalid: " + violations.front().describe();
  if (violations.size() > 1) {
    msg += " (and " + std::to_string(violations.size() - 1) + " more)";
  }
  throw ValidationError(msg);
}

}  // namespace

std::string MeshViolation::describe() const {
  return invariant + " [entity " + std::to_string(entity) + "]";
}

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

TriMesh::TriMesh(std::vector<Point> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const std::size_t nv = vertices_.size();
  tissue_mask_.assign(nv, 0);
  for (const auto& tri : triangles_) {
    if (tri.region != Region::Tissue) continue;
    for (Index v : tri.v) {
      if (v < nv) tissue_mask_[v] = 1;
    }
  }
  for (Index v = 0; v < nv; ++v) {
    if (tissue_mask_[v] != 0) tissue_nodes_.push_back(v);
  }

  const auto edges = collect_edges(triangles_, nv);
  for (const auto& [key, use] : edges) {
    if (use.tissue == 1) {
      boundary_edges_.push_back({use.tissue_a, use.tissue_b, BoundaryTag::TissueBoundary});
    }
    if (use.total == 1) {
      boundary_edges_.push_back({use.a, use.b, BoundaryTag::OuterBoundary});
    }
  }
}

bool TriMesh::has_shell() const {
  return std::any_of(triangles_.begin(), triangles_.end(),
                     [](const Triangle& t) { return t.region == Region::Shell; });
}

double TriMesh::signed_area(Index t) const {
  const auto& tri = triangles_.at(t);
  return bidomain::signed_area(vertices_[tri.v[0]], vertices_[tri.v[1]], vertices_[tri.v[2]]);
}

double TriMesh::region_area(Region r) const {
  double sum = 0.0;
  for (Index t = 0; t < triangles_.size(); ++t) {
    if (triangles_[t].region == r) sum += signed_area(t);
  }
  return sum;
}

double TriMesh::total_area() const {
  double sum = 0.0;
  for (Index t = 0; t < triangles_.size(); ++t) sum += signed_area(t);
  return sum;
}

std::optional<Location> TriMesh::locate(Point p, double tol) const {
  for (Index t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    const Point& a = vertices_[tri.v[0]];
    const Point& b = vertices_[tri.v[1]];
    const Point& c = vertices_[tri.v[2]];
    const double area = bidomain::signed_area(a, b, c);
    if (area <= 0.0) continue;
    const double w0 = bidomain::signed_area(p, b, c) / area;
    const double w1 = bidomain::signed_area(a, p, c) / area;
    const double w2 = bidomain::signed_area(a, b, p) / area;
    if (w0 >= -tol && w1 >= -tol && w2 >= -tol) {
      return Location{t, {w0, w1, w2}};
    }
  }
  return std::nullopt;
}

TriMesh generate_disk(double radius, double h) {
  if (!(radius > 0.0) || !(h > 0.0)) {
    throw ValidationError("generate_disk: radius and h must be positive");
  }
  if (!(h < radius)) {
    throw ValidationError("generate_disk: h must be smaller than the radius");
  }
  const auto rings = static_cast<std::size_t>(std::ceil(radius / h - 1e-9));
  std::vector<double> radii{0.0};
  for (std::size_t i = 1; i <= rings; ++i) {
    radii.push_back(i == rings ? radius : radius * static_cast<double>(i) / static_cast<double>(rings));
  }
  std::vector<Region> bands(rings, Region::Tissue);
  TriMesh mesh = build_ring_mesh(radii, bands, h);
  throw_if_invalid(mesh);
  return mesh;
}

TriMesh generate_nested_disk(double inner_radius, double outer_radius, double h) {
  if (!(inner_radius > 0.0) || !(h > 0.0) || !(outer_radius >= inner_radius)) {
    throw ValidationError("generate_nested_disk: need 0 < inner_radius <= outer_radius, h > 0");
  }
  if (!(h < inner_radius)) {
    throw ValidationError("generate_nested_disk: h must be smaller than the inner radius");
  }
  const auto inner_rings = static_cast<std::size_t>(std::ceil(inner_radius / h - 1e-9));
  std::vector<double> radii{0.0};
  for (std::size_t i = 1; i <= inner_rings; ++i) {
    radii.push_back(i == inner_rings
                        ? inner_radius
                        : inner_radius * static_cast<double>(i) / static_cast<double>(inner_rings));
  }
  const double gap = outer_radius - inner_radius;
  if (gap > 0.0) {
    const auto outer_rings =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(gap / h - 1e-9)));
    for (std::size_t i = 1; i <= outer_rings; ++i) {
      radii.push_back(i == outer_rings
                          ? outer_radius
                          : inner_radius + gap * static_cast<double>(i) / static_cast<double>(outer_rings));
    }
  }
  std::vector<Region> band_region(radii.size() - 1);
  for (std::size_t k = 0; k + 1 < radii.size(); ++k) {
    band_region[k] = radii[k + 1] <= inner_radius ? Region::Tissue : Region::Shell;
  }
  TriMesh mesh = build_ring_mesh(radii, band_region, h);
  throw_if_invalid(mesh);
  return mesh;
}

TriMesh generate_nested_rect(const AxisRect& inner, const AxisRect& outer, double h) {
  if (!(h > 0.0)) throw ValidationError("generate_nested_rect: h must be positive");
  if (!(inner.x1 > inner.x0) || !(inner.y1 > inner.y0)) {
    throw ValidationError("generate_nested_rect: inner rectangle is degenerate");
  }
  if (!outer.contains(inner)) {
    throw ValidationError("generate_nested_rect: inner rectangle not contained in outer");
  }
  const auto xs = grid_lines(outer.x0, inner.x0, inner.x1, outer.x1, h);
  const auto ys = grid_lines(outer.y0, inner.y0, inner.y1, outer.y1, h);
  const std::size_t nx = xs.size();
  const std::size_t ny = ys.size();

  std::vector<Point> vertices;
  vertices.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) vertices.push_back({xs[i], ys[j]});
  }
  std::vector<Triangle> triangles;
  auto id = [nx](std::size_t i, std::size_t j) { return j * nx + i; };
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]);
      const double cy = 0.5 * (ys[j] + ys[j + 1]);
      const bool tissue = cx > inner.x0 && cx < inner.x1 && cy > inner.y0 && cy < inner.y1;
      const Region region = tissue ? Region::Tissue : Region::Shell;
      triangles.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}, region});
      triangles.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}, region});
    }
  }
  TriMesh mesh(std::move(vertices), std::move(triangles));
  throw_if_invalid(mesh);
  return mesh;
}

std::vector<MeshViolation> validate(const TriMesh& mesh) {
  std::vector<MeshViolation> out;
  const auto& vertices = mesh.vertices();
  const auto& triangles = mesh.triangles();
  const std::size_t nv = vertices.size();

  std::vector<std::uint8_t> referenced(nv, 0);
  for (Index t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    if (tri.v[0] >= nv || tri.v[1] >= nv || tri.v[2] >= nv) {
      out.push_back({"vertex index out of range", t});
      continue;
    }
    if (tri.region != Region::Tissue && tri.region != Region::Shell) {
      out.push_back({"unknown region tag", t});
    }
    if (tri.v[0] == tri.v[1] || tri.v[1] == tri.v[2] || tri.v[0] == tri.v[2]) {
      out.push_back({"repeated vertex in triangle", t});
    }
    if (!(mesh.signed_area(t) > 0.0)) out.push_back({"non-positive area", t});
    for (Index v : tri.v) referenced[v] = 1;
  }
  for (Index v = 0; v < nv; ++v) {
    if (referenced[v] == 0) out.push_back({"vertex not referenced by any triangle", v});
  }

  const auto edges = collect_edges(triangles, nv);
  std::vector<std::pair<Index, Index>> outer;
  for (const auto& [key, use] : edges) {
    if (use.total > 2) {
      out.push_back({"edge shared by " + std::to_string(use.total) + " triangles", use.first_triangle});
    }
    if (use.total == 1) outer.emplace_back(use.a, use.b);
  }

  // Closed loops: every boundary vertex has matching in/out degree.
  std::map<Index, int> balance;
  for (const auto& [a, b] : outer) {
    ++balance[a];
    --balance[b];
  }
  for (const auto& [v, bal] : balance) {
    if (bal != 0) out.push_back({"boundary loop not closed", v});
  }

  // A vertex in the interior of a boundary edge means a hanging node.
  for (const auto& [a, b] : outer) {
    for (Index v = 0; v < nv; ++v) {
      if (v == a || v == b) continue;
      if (point_strictly_inside_segment(vertices[v], vertices[a], vertices[b])) {
        out.push_back({"hanging vertex on boundary edge", v});
      }
    }
  }
  return out;
}

MeshLoadResult load_mesh(std::string_view text) {
  struct Content {
    std::size_t line;
    std::vector<std::string_view> tokens;
  };
  std::vector<Content> rows;
  for (const auto& line : text::lines_of(text)) {
    auto tokens = text::split_ws(text::strip_comment(line.content));
    if (!tokens.empty()) rows.push_back({line.number, std::move(tokens)});
  }

  std::size_t pos = 0;
  auto expect_header = [&](std::string_view keyword) -> std::size_t {
    if (pos >= rows.size()) {
      throw ParseError(0, "unexpected end of file, expected '" + std::string(keyword) + "'");
    }
    const auto& row = rows[pos];
    if (row.tokens.size() != 2 || row.tokens[0] != keyword) {
      throw ParseError(row.line, "expected '" + std::string(keyword) + " <count>'");
    }
    const auto count = text::parse_int<std::size_t>(row.tokens[1]);
    if (!count) throw ParseError(row.line, "invalid count '" + std::string(row.tokens[1]) + "'");
    ++pos;
    return *count;
  };
  auto take_row = [&](std::size_t fields, std::string_view what) -> const Content& {
    if (pos >= rows.size()) {
      throw ParseError(0, "unexpected end of file while reading " + std::string(what));
    }
    const auto& row = rows[pos];
    if (row.tokens.size() != fields) {
      throw ParseError(row.line, "expected " + std::to_string(fields) + " fields for " + std::string(what));
    }
    ++pos;
    return row;
  };

  if (rows.empty() || rows[0].tokens.size() != 2 || rows[0].tokens[0] != "bdmesh" ||
      rows[0].tokens[1] != "1") {
    throw ParseError(rows.empty() ? 0 : rows[0].line, "missing 'bdmesh 1' header");
  }
  pos = 1;

  const std::size_t nv = expect_header("vertices");
  std::vector<Point> vertices;
  vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& row = take_row(2, "vertex");
    const auto x = text::parse_double(row.tokens[0]);
    const auto y = text::parse_double(row.tokens[1]);
    if (!x || !y) throw ParseError(row.line, "invalid vertex coordinate");
    vertices.push_back({*x, *y});
  }

  const std::size_t nt = expect_header("triangles");
  std::vector<Triangle> triangles;
  std::vector<std::string> warnings;
  triangles.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& row = take_row(4, "triangle");
    Triangle tri;
    for (int k = 0; k < 3; ++k) {
      const auto v = text::parse_int<std::size_t>(row.tokens[k]);
      if (!v) throw ParseError(row.line, "invalid vertex index '" + std::string(row.tokens[k]) + "'");
      if (*v >= nv) {
        throw ParseError(row.line, "vertex index " + std::to_string(*v) + " out of range (" +
                                       std::to_string(nv) + " vertices)");
      }
      tri.v[k] = *v;
    }
    const auto region = text::parse_int<int>(row.tokens[3]);
    if (!region || (*region != 0 && *region != 1)) {
      throw ParseError(row.line, "unknown region tag '" + std::string(row.tokens[3]) + "'");
    }
    tri.region = static_cast<Region>(*region);
    if (signed_area(vertices[tri.v[0]], vertices[tri.v[1]], vertices[tri.v[2]]) < 0.0) {
      std::swap(tri.v[1], tri.v[2]);
      warnings.push_back("triangle " + std::to_string(t) + " (line " + std::to_string(row.line) +
                         ") listed clockwise; orientation repaired");
    }
    triangles.push_back(tri);
  }

  std::optional<std::vector<BoundaryEdge>> declared;
  if (pos < rows.size()) {
    const std::size_t nb = expect_header("boundary");
    declared.emplace();
    for (std::size_t e = 0; e < nb; ++e) {
      const auto& row = take_row(3, "boundary edge");
      const auto a = text::parse_int<std::size_t>(row.tokens[0]);
      const auto b = text::parse_int<std::size_t>(row.tokens[1]);
      const auto tag = text::parse_int<int>(row.tokens[2]);
      if (!a || !b || *a >= nv || *b >= nv) throw ParseError(row.line, "invalid boundary edge vertex");
      if (!tag || (*tag != 0 && *tag != 1)) {
        throw ParseError(row.line, "unknown boundary tag '" + std::string(row.tokens[2]) + "'");
      }
      declared->push_back({*a, *b, static_cast<BoundaryTag>(*tag)});
    }
  }
  if (pos < rows.size()) throw ParseError(rows[pos].line, "unexpected trailing content");

  TriMesh mesh(std::move(vertices), std::move(triangles));
  throw_if_invalid(mesh);

  if (declared) {
    using Key = std::tuple<Index, Index, int>;
    auto keyed = [](const std::vector<BoundaryEdge>& edges) {
      std::set<Key> keys;
      for (const auto& e : edges) {
        keys.insert({std::min(e.a, e.b), std::max(e.a, e.b), static_cast<int>(e.tag)});
      }
      return keys;
    };
    const auto derived = keyed(mesh.boundary_edges());
    const auto given = keyed(*declared);
    for (const auto& k : given) {
      if (!derived.contains(k)) {
        throw ValidationError("boundary edge (" + std::to_string(std::get<0>(k)) + ", " +
                              std::to_string(std::get<1>(k)) + ") with tag " +
                              std::to_string(std::get<2>(k)) + " is not a boundary edge of that kind");
      }
    }
    if (given.size() != derived.size()) {
      throw ValidationError("boundary section lists " + std::to_string(given.size()) +
                            " edges but connectivity yields " + std::to_string(derived.size()));
    }
  }
  return {std::move(mesh), std::move(warnings)};
}

std::string write_mesh(const TriMesh& mesh) {
  std::ostringstream os;
  os << "bdmesh 1\n";
  os << "vertices " << mesh.num_vertices() << '\n';
  for (const auto& p : mesh.vertices()) {
    os << text::format_double(p.x) << ' ' << text::format_double(p.y) << '\n';
  }
  os << "triangles " << mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) {
    os << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << ' ' << static_cast<int>(t.region) << '\n';
  }
  os << "boundary " << mesh.boundary_edges().size() << '\n';
  for (const auto& e : mesh.boundary_edges()) {
    os << e.a << ' ' << e.b << ' ' << static_cast<int>(e.tag) << '\n';
  }
  return os.str();
}

}  // namespace bidomain
