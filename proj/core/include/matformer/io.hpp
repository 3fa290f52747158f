#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "matformer/crystal.hpp"
#include "matformer/graph.hpp"

namespace matformer {

/// Input that could not be parsed. `line()` is 1-based, or 0 when the
/// problem is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0);
  int line() const { return line_; }

 private:
  int line_;
};

/// VASP-5 POSCAR: comment, positive scale, three lattice rows, species
/// symbols, counts, optional "Selective dynamics" is rejected, then
/// Direct/Cartesian and one coordinate row per atom. Positions are wrapped
/// into the cell.
Crystal parse_poscar(std::string_view text);
std::string write_poscar(const Crystal& crystal, std::string_view comment = "matformer");

/// {"lattice": [[...]x3], "atomic_numbers": [...], "positions": [[x,y,z], ...]}
/// with Cartesian positions; "atom_features" is written only when the
/// features are not the default one-hot encoding.
Crystal parse_crystal_json(std::string_view text);
std::string write_crystal_json(const Crystal& crystal);

std::string write_graph_json(const CrystalGraph& graph);
CrystalGraph parse_graph_json(std::string_view text);

/// Line-oriented form: a header line, one `node` line per node and one
/// `edge src dst distance k1 k2 k3 kind` line per edge.
std::string write_graph_text(const CrystalGraph& graph);

struct DatasetRecord {
  std::string id;
  Crystal crystal;
  double target = 0.0;
};

/// `id,target` rows after a header line.
std::vector<std::pair<std::string, double>> parse_targets_csv(std::string_view text);

/// Reads a .json crystal or a POSCAR (any other name).
Crystal load_crystal_file(const std::filesystem::path& path);

/// A file is loaded as one crystal; a directory yields every crystal file in
/// it, sorted by name. Returns (id, crystal) with id = file stem.
std::vector<std::pair<std::string, Crystal>> load_crystals(const std::filesystem::path& path);

/// Directory with `targets.csv` and one crystal file per id
/// (`<id>.json`, `<id>.poscar`, `<id>.vasp` or `<id>`).
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir);

/// `key = value` lines; `#` starts a comment; blank lines ignored.
using RunConfig = std::map<std::string, std::string>;
RunConfig parse_run_config(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct PredictionRow {
  std::string id;
  double prediction = 0.0;
  double target = 0.0;
};

/// `id,prediction,target,abs_err`
std::string write_predictions_csv(const std::vector<PredictionRow>& rows);

}  // namespace matformer
