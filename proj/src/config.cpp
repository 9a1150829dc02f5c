#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "bidomain/cli_io.hpp"
#include "bidomain/errors.hpp"
#include "text_util.hpp"

namespace bidomain {

namespace {

using text::format_double;

struct Call {
  std::string name;
  std::vector<double> args;
};

[[noreturn]] void fail(std::size_t line, const std::string& key, const std::string& what) {
  throw ParseError(line, "key '" + key + "': " + what);
}

double number(std::string_view v, std::size_t line, const std::string& key) {
  const auto d = text::parse_double(v);
  if (!d) fail(line, key, "expected a number, got '" + std::string(v) + "'");
  return *d;
}

std::size_t count(std::string_view v, std::size_t line, const std::string& key) {
  const auto c = text::parse_int<std::size_t>(v);
  if (!c) fail(line, key, "expected a non-negative integer, got '" + std::string(v) + "'");
  return *c;
}

std::vector<double> arg_list(std::string_view inner, std::size_t line, const std::string& key) {
  std::vector<double> out;
  if (text::trim(inner).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = inner.find(',', start);
    out.push_back(number(inner.substr(start, comma == std::string_view::npos ? inner.npos : comma - start), line, key));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// name(a, b, ...) or a bare (a, b, ...) tuple with an empty name.
Call call(std::string_view v, std::size_t line, const std::string& key) {
  v = text::trim(v);
  const auto open = v.find('(');
  if (open == std::string_view::npos || v.back() != ')') {
    fail(line, key, "expected name(arguments) or (x, y), got '" + std::string(v) + "'");
  }
  return {std::string(text::trim(v.substr(0, open))), arg_list(v.substr(open + 1, v.size() - open - 2), line, key)};
}

std::vector<double> tuple(std::string_view v, std::size_t n, std::size_t line, const std::string& key) {
  const Call c = call(v, line, key);
  if (!c.name.empty() || c.args.size() != n) {
    fail(line, key, "expected a tuple of " + std::to_string(n) + " numbers");
  }
  return c.args;
}

FluxLaw law_from(std::string_view v, std::size_t line, const std::string& key) {
  const Call c = call(v, line, key);
  auto want = [&](std::size_t lo, std::size_t hi) {
    if (c.args.size() < lo || c.args.size() > hi) fail(line, key, "wrong number of arguments to " + c.name);
  };
  if (c.name == "iso") {
    want(1, 1);
    return FluxLaw::isotropic(c.args[0]);
  }
  if (c.name == "diag") {
    want(2, 2);
    return FluxLaw::diagonal(c.args[0], c.args[1]);
  }
  if (c.name == "tensor") {
    want(3, 3);
    return FluxLaw::linear({c.args[0], c.args[1], c.args[2]});
  }
  if (c.name == "ppower") {
    want(2, 3);
    return FluxLaw::p_power(c.args[0], c.args[1],
                            c.args.size() == 3 ? std::optional<double>(c.args[2]) : std::nullopt);
  }
  fail(line, key, "unknown law '" + c.name + "' (iso, diag, tensor, ppower)");
}

std::string render_law(const FluxLaw& law) {
  if (const auto* lin = law.as_linear()) {
    const auto& m = lin->m;
    if (m.xy == 0.0 && m.xx == m.yy) return "iso(" + format_double(m.xx) + ")";
    if (m.xy == 0.0) return "diag(" + format_double(m.xx) + ", " + format_double(m.yy) + ")";
    return "tensor(" + format_double(m.xx) + ", " + format_double(m.xy) + ", " + format_double(m.yy) + ")";
  }
  const auto* pp = law.as_p_power();
  return "ppower(" + format_double(pp->alpha) + ", " + format_double(pp->p) + ", " + format_double(pp->delta) + ")";
}

template <typename E>
E word(std::string_view v, const std::map<std::string, E>& table, std::size_t line, const std::string& key) {
  const auto it = table.find(std::string(text::trim(v)));
  if (it == table.end()) {
    std::string options;
    for (const auto& [name, _] : table) options += (options.empty() ? "" : ", ") + name;
    fail(line, key, "expected one of " + options + ", got '" + std::string(v) + "'");
  }
  return it->second;
}

template <typename E>
std::string word_of(E value, const std::map<std::string, E>& table) {
  for (const auto& [name, e] : table) {
    if (e == value) return name;
  }
  return "?";
}

const std::map<std::string, MeshSource::Kind> kSources{{"disk", MeshSource::Kind::Disk},
                                                       {"nested_disk", MeshSource::Kind::NestedDisk},
                                                       {"nested_rect", MeshSource::Kind::NestedRect},
                                                       {"file", MeshSource::Kind::File}};
const std::map<std::string, IonicKind> kModels{
    {"fhn", IonicKind::FitzHughNagumo}, {"no_cubic", IonicKind::NoCubic}, {"zero", IonicKind::Zero}};
const std::map<std::string, CouplingMode> kModes{{"fhn", CouplingMode::FitzHughNagumo},
                                                 {"pure_gradient", CouplingMode::PureGradient}};
const std::map<std::string, Nonlinearity> kNonlinearities{{"explicit", Nonlinearity::Explicit},
                                                          {"newton", Nonlinearity::Newton}};
const std::map<std::string, FluxIteration> kFluxIterations{{"none", FluxIteration::None},
                                                           {"picard", FluxIteration::Picard}};
const std::map<std::string, LinearSolverKind> kSolvers{
    {"auto", LinearSolverKind::Auto}, {"cg", LinearSolverKind::CG}, {"bicgstab", LinearSolverKind::BiCGStab}};
const std::map<std::string, bool> kBools{{"true", true}, {"false", false}};

// Keys each mesh source accepts besides `source`.
const std::map<MeshSource::Kind, std::set<std::string>> kMeshKeys{
    {MeshSource::Kind::Disk, {"radius", "h"}},
    {MeshSource::Kind::NestedDisk, {"radius", "inner_radius", "h"}},
    {MeshSource::Kind::NestedRect, {"inner", "outer", "h"}},
    {MeshSource::Kind::File, {"path"}}};

AxisRect rect(std::string_view v, std::size_t line, const std::string& key) {
  const auto t = tuple(v, 4, line, key);
  return {t[0], t[1], t[2], t[3]};
}

void validate(const RunConfig& cfg) {
  cfg.step.check();
  cfg.ionic.check();
  if (cfg.stimulus) cfg.stimulus->check();
  if (!(cfg.t_end > 0.0) || !std::isfinite(cfg.t_end)) throw ValidationError("t_end must be positive");
  const double ratio = cfg.t_end / cfg.step.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) || std::round(ratio) < 1.0) {
    throw ValidationError("dt must divide t_end into a whole number of steps");
  }
  const std::size_t steps = cfg.steps();
  if (cfg.probe_every == 0 || steps % cfg.probe_every != 0) {
    throw ValidationError("probe_every must be positive and divide the number of steps (" + std::to_string(steps) +
                          ")");
  }
  if (cfg.snapshot_every != 0 && steps % cfg.snapshot_every != 0) {
    throw ValidationError("snapshot_every must divide the number of steps (" + std::to_string(steps) + ")");
  }
  if (cfg.initial.shape == InitialSpec::Shape::Disk && !(cfg.initial.r1 > 0.0)) {
    throw ValidationError("initial disk radius must be positive");
  }
  if (cfg.initial.shape == InitialSpec::Shape::Annulus && !(0.0 <= cfg.initial.r0 && cfg.initial.r0 < cfg.initial.r1)) {
    throw ValidationError("initial annulus radii must satisfy 0 <= r0 < r1");
  }

  const TriMesh mesh = build_mesh(cfg);
  if (mesh.has_shell() && !cfg.laws.extra_shell) {
    throw ValidationError("mesh has a shell region but [laws] gives no M_e_shell");
  }
  for (std::size_t i = 0; i < cfg.probes.size(); ++i) {
    if (!mesh.locate(cfg.probes[i])) {
      throw ValidationError("probe " + std::to_string(i + 1) + " (" + format_double(cfg.probes[i].x) + ", " +
                            format_double(cfg.probes[i].y) + ") lies outside the mesh");
    }
  }
  if (cfg.stimulus) (void)stimulus_load(mesh, *cfg.stimulus);
}

}  // namespace

bool InitialSpec::contains(const Point& p) const {
  const double r = std::hypot(p.x - center.x, p.y - center.y);
  switch (shape) {
    case Shape::All:
      return true;
    case Shape::Disk:
      return r <= r1;
    case Shape::Annulus:
      return r0 <= r && r <= r1;
  }
  return false;
}

std::size_t RunConfig::steps() const { return static_cast<std::size_t>(std::llround(t_end / step.dt)); }

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.mesh == b.mesh && a.laws == b.laws && a.ionic == b.ionic && a.step == b.step && a.t_end == b.t_end &&
         a.stimulus == b.stimulus && a.probes == b.probes && a.probe_every == b.probe_every &&
         a.snapshot_every == b.snapshot_every && a.output_dir == b.output_dir && a.seed == b.seed &&
         a.initial == b.initial;
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  std::optional<double> epsilon;
  std::optional<FluxLaw> m_i;
  std::optional<FluxLaw> m_e;
  std::map<std::string, std::size_t> mesh_keys;  // key -> line
  std::set<std::string> seen;
  std::string section;

  using Handler = std::function<void(std::string_view, std::size_t, const std::string&)>;
  const std::map<std::string, std::map<std::string, Handler>> handlers{
      {"mesh",
       {{"source", [&](auto v, auto l, auto& k) { cfg.mesh.kind = word(v, kSources, l, k); }},
        {"radius", [&](auto v, auto l, auto& k) { cfg.mesh.radius = number(v, l, k); }},
        {"inner_radius", [&](auto v, auto l, auto& k) { cfg.mesh.inner_radius = number(v, l, k); }},
        {"h", [&](auto v, auto l, auto& k) { cfg.mesh.h = number(v, l, k); }},
        {"inner", [&](auto v, auto l, auto& k) { cfg.mesh.inner = rect(v, l, k); }},
        {"outer", [&](auto v, auto l, auto& k) { cfg.mesh.outer = rect(v, l, k); }},
        {"path", [&](auto v, auto l, auto& k) {
           if (v.empty()) fail(l, k, "empty path");
           cfg.mesh.path = std::string(v);
         }}}},
      {"laws",
       {{"M_i", [&](auto v, auto l, auto& k) { m_i = law_from(v, l, k); }},
        {"M_e", [&](auto v, auto l, auto& k) { m_e = law_from(v, l, k); }},
        {"M_e_shell", [&](auto v, auto l, auto& k) { cfg.laws.extra_shell = law_from(v, l, k); }}}},
      {"ionic",
       {{"model", [&](auto v, auto l, auto& k) { cfg.ionic.kind = word(v, kModels, l, k); }},
        {"mode", [&](auto v, auto l, auto& k) { cfg.ionic.mode = word(v, kModes, l, k); }},
        {"a", [&](auto v, auto l, auto& k) { cfg.ionic.a = number(v, l, k); }},
        {"lambda", [&](auto v, auto l, auto& k) { cfg.ionic.lambda = number(v, l, k); }},
        {"mu", [&](auto v, auto l, auto& k) { cfg.ionic.mu = number(v, l, k); }},
        {"tau", [&](auto v, auto l, auto& k) { cfg.ionic.tau = number(v, l, k); }},
        {"rate", [&](auto v, auto l, auto& k) { cfg.ionic.rate = number(v, l, k); }}}},
      {"stepper",
       {{"dt", [&](auto v, auto l, auto& k) { cfg.step.dt = number(v, l, k); }},
        {"t_end", [&](auto v, auto l, auto& k) { cfg.t_end = number(v, l, k); }},
        {"epsilon", [&](auto v, auto l, auto& k) { epsilon = number(v, l, k); }},
        {"nonlinearity", [&](auto v, auto l, auto& k) { cfg.step.nonlinearity = word(v, kNonlinearities, l, k); }},
        {"newton_max_iter", [&](auto v, auto l, auto& k) { cfg.step.newton_max_iter = count(v, l, k); }},
        {"newton_tol", [&](auto v, auto l, auto& k) { cfg.step.newton_tol = number(v, l, k); }},
        {"flux_iteration", [&](auto v, auto l, auto& k) { cfg.step.flux_iteration = word(v, kFluxIterations, l, k); }},
        {"picard_max_iter", [&](auto v, auto l, auto& k) { cfg.step.picard_max_iter = count(v, l, k); }},
        {"picard_tol", [&](auto v, auto l, auto& k) { cfg.step.picard_tol = number(v, l, k); }},
        {"solver", [&](auto v, auto l, auto& k) { cfg.step.solver = word(v, kSolvers, l, k); }},
        {"solver_tol", [&](auto v, auto l, auto& k) { cfg.step.linear.tol = number(v, l, k); }},
        {"solver_maxit", [&](auto v, auto l, auto& k) { cfg.step.linear.max_iterations = count(v, l, k); }},
        {"debug_symmetry", [&](auto v, auto l, auto& k) { cfg.step.linear.check_symmetry = word(v, kBools, l, k); }}}},
      {"output",
       {{"directory", [&](auto v, auto l, auto& k) {
           if (v.empty()) fail(l, k, "empty directory");
           cfg.output_dir = std::string(v);
         }},
        {"probe_every", [&](auto v, auto l, auto& k) { cfg.probe_every = count(v, l, k); }},
        {"snapshot_every", [&](auto v, auto l, auto& k) { cfg.snapshot_every = count(v, l, k); }},
        {"seed", [&](auto v, auto l, auto& k) {
           const auto s = text::parse_int<std::uint64_t>(v);
           if (!s) fail(l, k, "expected a non-negative integer");
           cfg.seed = *s;
         }}}},
      {"stimulus",
       {{"amplitude", [&](auto v, auto l, auto& k) { cfg.stimulus->amplitude = number(v, l, k); }},
        {"center", [&](auto v, auto l, auto& k) {
           const auto t = tuple(v, 2, l, k);
           cfg.stimulus->center = {t[0], t[1]};
         }},
        {"radius", [&](auto v, auto l, auto& k) { cfg.stimulus->radius = number(v, l, k); }},
        {"start", [&](auto v, auto l, auto& k) { cfg.stimulus->start = number(v, l, k); }},
        {"end", [&](auto v, auto l, auto& k) { cfg.stimulus->end = number(v, l, k); }}}},
      {"probes",
       {{"point", [&](auto v, auto l, auto& k) {
           const auto t = tuple(v, 2, l, k);
           cfg.probes.push_back({t[0], t[1]});
         }}}},
      {"initial",
       {{"u", [&](auto v, auto l, auto& k) { cfg.initial.u = number(v, l, k); }},
        {"w", [&](auto v, auto l, auto& k) { cfg.initial.w = number(v, l, k); }},
        {"region", [&](auto v, auto l, auto& k) {
           if (text::trim(v) == "all") {
             cfg.initial.shape = InitialSpec::Shape::All;
             return;
           }
           const Call c = call(v, l, k);
           if (c.name == "disk" && c.args.size() == 3) {
             cfg.initial.shape = InitialSpec::Shape::Disk;
             cfg.initial.center = {c.args[0], c.args[1]};
             cfg.initial.r1 = c.args[2];
           } else if (c.name == "annulus" && c.args.size() == 4) {
             cfg.initial.shape = InitialSpec::Shape::Annulus;
             cfg.initial.center = {c.args[0], c.args[1]};
             cfg.initial.r0 = c.args[2];
             cfg.initial.r1 = c.args[3];
           } else {
             fail(l, k, "expected all, disk(x, y, r) or annulus(x, y, r0, r1)");
           }
         }}}},
  };

  for (const auto& line : text::lines_of(text)) {
    const auto content = text::trim(text::strip_comment(line.content));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ParseError(line.number, "malformed section header");
      section = std::string(text::trim(content.substr(1, content.size() - 2)));
      if (!handlers.contains(section)) throw ParseError(line.number, "unknown section [" + section + "]");
      if (section == "stimulus") {
        if (cfg.stimulus) throw ParseError(line.number, "duplicate section [stimulus]");
        cfg.stimulus.emplace();
      }
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string_view::npos) throw ParseError(line.number, "expected 'key = value'");
    const std::string key(text::trim(content.substr(0, eq)));
    const auto value = text::trim(content.substr(eq + 1));
    if (section.empty()) throw ParseError(line.number, "key '" + key + "' appears before any section");
    const auto& table = handlers.at(section);
    const auto it = table.find(key);
    if (it == table.end()) throw ParseError(line.number, "unknown key '" + key + "' in section [" + section + "]");
    const std::string qualified = section + "." + key;
    if (key != "point" && !seen.insert(qualified).second) {
      throw ParseError(line.number, "duplicate key '" + key + "' in section [" + section + "]");
    }
    if (section == "mesh" && key != "source") mesh_keys[key] = line.number;
    it->second(value, line.number, key);
  }

  for (const auto& [key, line] : mesh_keys) {
    if (!kMeshKeys.at(cfg.mesh.kind).contains(key)) {
      throw ParseError(line, "key '" + key + "' does not apply to mesh source " + word_of(cfg.mesh.kind, kSources));
    }
  }
  if (cfg.mesh.kind == MeshSource::Kind::File && cfg.mesh.path.empty()) {
    throw ValidationError("mesh source 'file' needs a path");
  }
  if (!m_i || !m_e) throw ValidationError("[laws] must give M_i and M_e");
  cfg.laws.intra = *m_i;
  cfg.laws.extra_tissue = *m_e;
  cfg.step.epsilon = epsilon.value_or(default_epsilon(cfg.laws));
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("config file not found: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; };
  auto pair = [](double a, double b) { return "(" + format_double(a) + ", " + format_double(b) + ")"; };
  auto rect_of = [](const AxisRect& r) {
    return "(" + format_double(r.x0) + ", " + format_double(r.y0) + ", " + format_double(r.x1) + ", " +
           format_double(r.y1) + ")";
  };

  os << "[mesh]\n";
  kv("source", word_of(cfg.mesh.kind, kSources));
  switch (cfg.mesh.kind) {
    case MeshSource::Kind::Disk:
      kv("radius", format_double(cfg.mesh.radius));
      kv("h", format_double(cfg.mesh.h));
      break;
    case MeshSource::Kind::NestedDisk:
      kv("radius", format_double(cfg.mesh.radius));
      kv("inner_radius", format_double(cfg.mesh.inner_radius));
      kv("h", format_double(cfg.mesh.h));
      break;
    case MeshSource::Kind::NestedRect:
      kv("inner", rect_of(cfg.mesh.inner));
      kv("outer", rect_of(cfg.mesh.outer));
      kv("h", format_double(cfg.mesh.h));
      break;
    case MeshSource::Kind::File:
      kv("path", cfg.mesh.path);
      break;
  }

  os << "\n[laws]\n";
  kv("M_i", render_law(cfg.laws.intra));
  kv("M_e", render_law(cfg.laws.extra_tissue));
  if (cfg.laws.extra_shell) kv("M_e_shell", render_law(*cfg.laws.extra_shell));

  os << "\n[ionic]\n";
  kv("model", word_of(cfg.ionic.kind, kModels));
  kv("mode", word_of(cfg.ionic.mode, kModes));
  kv("a", format_double(cfg.ionic.a));
  kv("lambda", format_double(cfg.ionic.lambda));
  kv("mu", format_double(cfg.ionic.mu));
  kv("tau", format_double(cfg.ionic.tau));
  kv("rate", format_double(cfg.ionic.rate));

  os << "\n[stepper]\n";
  kv("dt", format_double(cfg.step.dt));
  kv("t_end", format_double(cfg.t_end));
  kv("epsilon", format_double(cfg.step.epsilon));
  kv("nonlinearity", word_of(cfg.step.nonlinearity, kNonlinearities));
  kv("newton_max_iter", std::to_string(cfg.step.newton_max_iter));
  kv("newton_tol", format_double(cfg.step.newton_tol));
  kv("flux_iteration", word_of(cfg.step.flux_iteration, kFluxIterations));
  kv("picard_max_iter", std::to_string(cfg.step.picard_max_iter));
  kv("picard_tol", format_double(cfg.step.picard_tol));
  kv("solver", word_of(cfg.step.solver, kSolvers));
  kv("solver_tol", format_double(cfg.step.linear.tol));
  kv("solver_maxit", std::to_string(cfg.step.linear.max_iterations));
  kv("debug_symmetry", cfg.step.linear.check_symmetry ? "true" : "false");

  if (cfg.stimulus) {
    os << "\n[stimulus]\n";
    kv("amplitude", format_double(cfg.stimulus->amplitude));
    kv("center", pair(cfg.stimulus->center.x, cfg.stimulus->center.y));
    kv("radius", format_double(cfg.stimulus->radius));
    kv("start", format_double(cfg.stimulus->start));
    kv("end", format_double(cfg.stimulus->end));
  }

  os << "\n[initial]\n";
  kv("u", format_double(cfg.initial.u));
  kv("w", format_double(cfg.initial.w));
  switch (cfg.initial.shape) {
    case InitialSpec::Shape::All:
      kv("region", "all");
      break;
    case InitialSpec::Shape::Disk:
      kv("region", "disk(" + format_double(cfg.initial.center.x) + ", " + format_double(cfg.initial.center.y) + ", " +
                       format_double(cfg.initial.r1) + ")");
      break;
    case InitialSpec::Shape::Annulus:
      kv("region", "annulus(" + format_double(cfg.initial.center.x) + ", " + format_double(cfg.initial.center.y) +
                       ", " + format_double(cfg.initial.r0) + ", " + format_double(cfg.initial.r1) + ")");
      break;
  }

  os << "\n[probes]\n";
  for (const Point& p : cfg.probes) kv("point", pair(p.x, p.y));

  os << "\n[output]\n";
  kv("directory", cfg.output_dir);
  kv("probe_every", std::to_string(cfg.probe_every));
  kv("snapshot_every", std::to_string(cfg.snapshot_every));
  kv("seed", std::to_string(cfg.seed));
  return os.str();
}

TriMesh build_mesh(const RunConfig& cfg) {
  const MeshSource& m = cfg.mesh;
  switch (m.kind) {
    case MeshSource::Kind::Disk:
      return generate_disk(m.radius, m.h);
    case MeshSource::Kind::NestedDisk:
      return generate_nested_disk(m.inner_radius, m.radius, m.h);
    case MeshSource::Kind::NestedRect:
      return generate_nested_rect(m.inner, m.outer, m.h);
    case MeshSource::Kind::File: {
      std::filesystem::path p(m.path);
      if (p.is_relative()) p = cfg.base_dir / p;
      std::ifstream in(p, std::ios::binary);
      if (!in) throw IoError("mesh file not found: " + p.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      return load_mesh(ss.str()).mesh;
    }
  }
  throw ValidationError("unknown mesh source");
}

State build_initial_state(const RunConfig& cfg, const TriMesh& mesh) {
  const std::size_t n = mesh.num_vertices();
  Vector u0(n, 0.0);
  Vector w0(n, 0.0);
  for (Index v = 0; v < n; ++v) {
    if (cfg.initial.contains(mesh.vertices()[v])) {
      u0[v] = cfg.initial.u;
      w0[v] = cfg.initial.w;
    }
  }
  return initial_state(mesh, u0, w0);
}

}  // namespace bidomain
