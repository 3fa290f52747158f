#include "matformer/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "matformer/elements.hpp"

namespace matformer {

using nlohmann::json;
namespace fs = std::filesystem;

ParseError::ParseError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view tok, int line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line);
  }
  return v;
}

long to_long(std::string_view tok, int line) {
  long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("expected an integer, got '" + std::string(tok) + "'", line);
  return v;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Mat3 lattice_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("'lattice' must be a 3x3 array");
  Mat3 l;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw ParseError("'lattice' must be a 3x3 array");
    for (int c = 0; c < 3; ++c) l(r, c) = j[r][c].get<double>();
  }
  return l;
}

}  // namespace

Crystal parse_poscar(std::string_view text) {
  const auto lines = lines_of(text);
  std::size_t cursor = 0;
  auto next = [&](const char* what) -> std::pair<std::string_view, int> {
    if (cursor >= lines.size()) throw ParseError(std::string("unexpected end of file, expected ") + what,
                                                 static_cast<int>(cursor) + 1);
    const int number = static_cast<int>(cursor) + 1;
    return {lines[cursor++], number};
  };

  next("comment line");
  auto [scale_line, scale_no] = next("scale factor");
  const auto scale_tok = split_ws(scale_line);
  if (scale_tok.size() != 1) throw ParseError("scale factor line must hold one number", scale_no);
  const double scale = to_double(scale_tok[0], scale_no);
  if (scale <= 0.0) {
    throw ParseError("non-positive scale factor (volume convention) is not supported", scale_no);
  }

  Mat3 lattice;
  for (int r = 0; r < 3; ++r) {
    auto [row, no] = next("lattice vector");
    const auto tok = split_ws(row);
    if (tok.size() < 3) throw ParseError("lattice vector needs three components", no);
    for (int c = 0; c < 3; ++c) lattice(r, c) = scale * to_double(tok[static_cast<std::size_t>(c)], no);
  }

  auto [species_line, species_no] = next("species line");
  const auto symbols = split_ws(species_line);
  if (symbols.empty()) throw ParseError("species line is empty", species_no);
  std::vector<int> species_z;
  for (const auto& s : symbols) {
    const auto z = atomic_number_from_symbol(s);
    if (!z) throw ParseError("unknown element symbol '" + s + "'", species_no);
    species_z.push_back(*z);
  }

  auto [count_line, count_no] = next("atom counts");
  const auto counts_tok = split_ws(count_line);
  if (counts_tok.size() != symbols.size()) {
    throw ParseError("atom counts do not match the number of species", count_no);
  }
  std::vector<int> z;
  for (std::size_t s = 0; s < counts_tok.size(); ++s) {
    const long count = to_long(counts_tok[s], count_no);
    if (count < 0) throw ParseError("negative atom count", count_no);
    z.insert(z.end(), static_cast<std::size_t>(count), species_z[s]);
  }
  if (z.empty()) throw ParseError("POSCAR declares no atoms", count_no);

  auto [mode_line, mode_no] = next("coordinate mode");
  const std::string_view mode = trim(mode_line);
  const char m = mode.empty() ? '\0' : static_cast<char>(std::tolower(static_cast<unsigned char>(mode[0])));
  if (m == 's') throw ParseError("selective dynamics is not supported", mode_no);
  bool direct = false;
  if (m == 'd') {
    direct = true;
  } else if (m == 'c' || m == 'k') {
    direct = false;
  } else {
    throw ParseError("expected 'Direct' or 'Cartesian' coordinate mode", mode_no);
  }

  if (std::abs(lattice.determinant()) <= kMinCellVolume) throw ParseError("lattice is singular", scale_no);

  PositionMatrix pos(static_cast<Eigen::Index>(z.size()), 3);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto [row, no] = next("coordinate row");
    const auto tok = split_ws(row);
    if (tok.size() < 3) throw ParseError("coordinate row needs three numbers", no);
    Vec3 v(to_double(tok[0], no), to_double(tok[1], no), to_double(tok[2], no));
    if (direct) {
      v = frac_to_cart(v, lattice);
    } else {
      v *= scale;
    }
    pos.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return wrap_positions(Crystal(lattice, std::move(pos), std::move(z)));
}

std::string write_poscar(const Crystal& crystal, std::string_view comment) {
  // One species block per run of equal atomic numbers, so atom order survives
  // a round trip. Repeated symbols are legal on the species line.
  std::vector<std::pair<int, int>> runs;
  for (int z : crystal.atomic_numbers()) {
    if (runs.empty() || runs.back().first != z) {
      runs.emplace_back(z, 1);
    } else {
      ++runs.back().second;
    }
  }
  std::ostringstream os;
  os << std::setprecision(17);
  os << comment << "\n1.0\n";
  for (int r = 0; r < 3; ++r) {
    os << crystal.lattice()(r, 0) << ' ' << crystal.lattice()(r, 1) << ' ' << crystal.lattice()(r, 2) << '\n';
  }
  for (std::size_t s = 0; s < runs.size(); ++s) os << (s ? " " : "") << element_symbol(runs[s].first);
  os << '\n';
  for (std::size_t s = 0; s < runs.size(); ++s) os << (s ? " " : "") << runs[s].second;
  os << "\nCartesian\n";
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    const Vec3 p = crystal.position(i);
    os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  return os.str();
}

Crystal parse_crystal_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ParseError("crystal JSON must be an object");
    for (const char* key : {"lattice", "atomic_numbers", "positions"}) {
      if (!j.contains(key)) throw ParseError(std::string("crystal JSON lacks '") + key + "'");
    }
    const Mat3 lattice = lattice_from_json(j["lattice"]);
    const auto z = j["atomic_numbers"].get<std::vector<int>>();
    const json& p = j["positions"];
    if (!p.is_array()) throw ParseError("'positions' must be an array");
    if (z.empty()) throw ParseError("crystal must contain at least one atom");
    if (p.size() != z.size()) throw ParseError("'positions' and 'atomic_numbers' differ in length");
    PositionMatrix pos(static_cast<Eigen::Index>(p.size()), 3);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p[i].is_array() || p[i].size() != 3) throw ParseError("each position must have three components");
      for (int c = 0; c < 3; ++c) pos(static_cast<Eigen::Index>(i), c) = p[i][c].get<double>();
    }
    if (j.contains("atom_features")) {
      const auto rows = j["atom_features"].get<std::vector<std::vector<double>>>();
      if (rows.size() != z.size() || rows.empty()) throw ParseError("'atom_features' row count mismatch");
      FeatureMatrix f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw ParseError("'atom_features' rows differ in length");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
          f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      return Crystal(lattice, std::move(pos), z, std::move(f));
    }
    return Crystal(lattice, std::move(pos), z);
  } catch (const json::exception& e) {
    throw ParseError(std::string("crystal JSON schema violation: ") + e.what());
  } catch (const CrystalError& e) {
    throw ParseError(std::string("invalid crystal: ") + e.what());
  }
}

std::string write_crystal_json(const Crystal& crystal) {
  json j;
  json lattice = json::array();
  for (int r = 0; r < 3; ++r) lattice.push_back(vec_json(crystal.lattice().row(r).transpose()));
  j["lattice"] = lattice;
  j["atomic_numbers"] = crystal.atomic_numbers();
  json pos = json::array();
  for (std::size_t i = 0; i < crystal.size(); ++i) pos.push_back(vec_json(crystal.position(i)));
  j["positions"] = pos;
  const FeatureMatrix& f = crystal.atom_features();
  const bool default_features =
      f.cols() == kOneHotWidth && f.isApprox(one_hot_atomic_numbers(crystal.atomic_numbers()), 0.0);
  if (!default_features) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      rows.push_back(std::vector<double>(f.row(r).data(), f.row(r).data() + f.cols()));
    }
    j["atom_features"] = rows;
  }
  return j.dump();
}

std::string write_graph_json(const CrystalGraph& graph) {
  json j;
  json meta;
  meta["method"] = graph.meta.method;
  meta["neighbor_rank"] = graph.meta.neighbor_rank;
  meta["t"] = graph.meta.t;
  meta["cutoff"] = graph.meta.cutoff;
  meta["self_edges"] = graph.meta.self_edges;
  meta["node_radius"] = graph.meta.node_radius;
  j["construction"] = meta;
  j["counts"] = {{"nodes", graph.num_nodes()},
                 {"neighbor_edges", graph.count_edges(EdgeKind::neighbor)},
                 {"self_connecting_edges", graph.count_edges(EdgeKind::self_connecting)}};
  json nodes = json::array();
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    const LatticeImage& k = graph.node_image[v];
    nodes.push_back({{"index", v},
                     {"atomic_number", graph.node_atomic_numbers[v]},
                     {"cell_atom", graph.node_cell_atom[v]},
                     {"image", {k.k1, k.k2, k.k3}}});
  }
  j["nodes"] = nodes;
  json edges = json::array();
  for (const Edge& e : graph.edges) {
    edges.push_back({{"src", e.src},
                     {"dst", e.dst},
                     {"distance", e.distance},
                     {"image", {e.image.k1, e.image.k2, e.image.k3}},
                     {"kind", std::string(to_string(e.kind))}});
  }
  j["edges"] = edges;
  return j.dump(1);
}

CrystalGraph parse_graph_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    CrystalGraph g;
    const json& meta = j.at("construction");
    g.meta.method = meta.at("method").get<std::string>();
    g.meta.neighbor_rank = meta.value("neighbor_rank", 0);
    g.meta.t = meta.value("t", 0);
    g.meta.cutoff = meta.value("cutoff", 0.0);
    g.meta.self_edges = meta.value("self_edges", false);
    g.meta.node_radius = meta.value("node_radius", std::vector<double>{});
    for (const json& n : j.at("nodes")) {
      g.node_atomic_numbers.push_back(n.at("atomic_number").get<int>());
      g.node_cell_atom.push_back(n.at("cell_atom").get<int>());
      const auto k = n.at("image").get<std::array<int, 3>>();
      g.node_image.push_back({k[0], k[1], k[2]});
    }
    g.node_features = one_hot_atomic_numbers(g.node_atomic_numbers);
    for (const json& e : j.at("edges")) {
      const auto k = e.at("image").get<std::array<int, 3>>();
      const std::string kind = e.at("kind").get<std::string>();
      if (kind != "neighbor" && kind != "self_connecting") throw ParseError("unknown edge kind '" + kind + "'");
      g.edges.push_back({e.at("src").get<int>(), e.at("dst").get<int>(), e.at("distance").get<double>(),
                         LatticeImage{k[0], k[1], k[2]},
                         kind == "neighbor" ? EdgeKind::neighbor : EdgeKind::self_connecting});
    }
    return g;
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  } catch (const CrystalError& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  }
}

std::string write_graph_text(const CrystalGraph& graph) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "graph " << graph.meta.method << " nodes " << graph.num_nodes() << " edges " << graph.edges.size() << '\n';
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    os << "node " << v << ' ' << graph.node_atomic_numbers[v] << '\n';
  }
  for (const Edge& e : graph.edges) {
    os << "edge " << e.src << ' ' << e.dst << ' ' << e.distance << ' ' << e.image.k1 << ' ' << e.image.k2 << ' '
       << e.image.k3 << ' ' << to_string(e.kind) << '\n';
  }
  return os.str();
}

std::vector<std::pair<std::string, double>> parse_targets_csv(std::string_view text) {
  std::vector<std::pair<std::string, double>> out;
  std::set<std::string> ids;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string_view line = trim(lines[n]);
    const int no = static_cast<int>(n) + 1;
    if (line.empty()) continue;
    if (n == 0 && line.starts_with("id")) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ParseError("expected 'id,target'", no);
    std::string id(trim(line.substr(0, comma)));
    const double target = to_double(trim(line.substr(comma + 1)), no);
    if (id.empty()) throw ParseError("empty id", no);
    if (!ids.insert(id).second) throw ParseError("duplicate id '" + id + "'", no);
    out.emplace_back(std::move(id), target);
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Crystal load_crystal_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    if (path.extension() == ".json") return parse_crystal_json(text);
    return parse_poscar(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

namespace {

bool is_crystal_file(const fs::path& p) {
  const auto ext = p.extension().string();
  const auto name = p.filename().string();
  return ext == ".json" || ext == ".poscar" || ext == ".vasp" || name.starts_with("POSCAR");
}

}  // namespace

std::vector<std::pair<std::string, Crystal>> load_crystals(const fs::path& path) {
  std::vector<std::pair<std::string, Crystal>> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_crystal_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.emplace_back(f.stem().string(), load_crystal_file(f));
  } else {
    out.emplace_back(path.stem().string(), load_crystal_file(path));
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const fs::path& dir) {
  const auto targets = parse_targets_csv(read_text_file(dir / "targets.csv"));
  std::vector<DatasetRecord> out;
  for (const auto& [id, target] : targets) {
    fs::path found;
    for (const char* ext : {".json", ".poscar", ".vasp", ""}) {
      const fs::path candidate = dir / (id + ext);
      if (fs::is_regular_file(candidate)) {
        found = candidate;
        break;
      }
    }
    if (found.empty()) throw ParseError("no crystal file for id '" + id + "' in " + dir.string());
    out.push_back({id, load_crystal_file(found), target});
  }
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    std::string_view line = lines[n];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", static_cast<int>(n) + 1);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", static_cast<int>(n) + 1);
    cfg[key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string write_predictions_csv(const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "id,prediction,target,abs_err\n";
  for (const auto& r : rows) {
    os << r.id << ',' << r.prediction << ',' << r.target << ',' << std::abs(r.prediction - r.target) << '\n';
  }
  return os.str();
}

}  // namespace matformer
