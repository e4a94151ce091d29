#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ept/vocab.hpp"

namespace ept {

/// Error for malformed structure files; line is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct RawAtom {
  std::string element;
  std::array<double, 3> pos;
};

struct RawMolecule {
  std::vector<RawAtom> atoms;
  std::vector<std::pair<int, int>> bonds;  // 0-based; empty for XYZ input
  bool has_bonds = false;
};

struct ResidueAtom {
  std::string name;
  std::string element;
  std::array<double, 3> pos;
};

struct Residue {
  std::string name;  // three-letter code
  char chain;
  std::vector<ResidueAtom> atoms;
};

/// Residues in file order; consecutive residues may belong to different
/// chains (the chain id is carried per residue).
struct RawProtein {
  std::vector<Residue> residues;
};

/// XYZ: count line, comment line, `symbol x y z` rows. Extra columns after
/// the coordinates are ignored. Only the first frame is read.
RawMolecule parse_xyz(const std::string& text);

/// V2000 connection table: counts line, atom block, bond block. Properties
/// are ignored; V3000 is rejected.
RawMolecule parse_sdf_subset(const std::string& text);

/// Fixed-column ATOM records of the first model. HETATM, altLoc other than
/// blank/'A', and all other record types are skipped. Hydrogens that the
/// file does not contain stay absent.
RawProtein parse_pdb_subset(const std::string& text);

/// Inverse of parse_xyz at six decimals.
std::string write_xyz(const RawMolecule& mol, const std::string& comment = "");

}  // namespace ept
