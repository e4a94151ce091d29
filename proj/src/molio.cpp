#include "ept/molio.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

namespace ept {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_double(const std::string& s, double* out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

bool parse_int(const std::string& s, long* out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) return false;
  *out = v;
  return true;
}

bool blank(const std::string& s) { return trim(s).empty(); }

}  // namespace

RawMolecule parse_xyz(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(1, "empty XYZ file");
  long count = 0;
  if (!parse_int(lines[0], &count) || count < 0)
    throw ParseError(1, "XYZ count line is not a non-negative integer: '" + lines[0] + "'");
  RawMolecule mol;
  for (long a = 0; a < count; ++a) {
    const std::size_t li = static_cast<std::size_t>(a) + 2;  // skip count + comment
    if (li >= lines.size() || blank(lines[li]))
      throw ParseError(1, "count line declares " + std::to_string(count) + " atoms but only " +
                              std::to_string(a) + " atom lines follow");
    const auto toks = tokens(lines[li]);
    if (toks.size() < 4)
      throw ParseError(static_cast<int>(li) + 1, "expected `symbol x y z`, got '" + lines[li] + "'");
    if (element_number(toks[0]) == 0)
      throw ParseError(static_cast<int>(li) + 1, "unknown element symbol '" + toks[0] + "'");
    RawAtom atom;
    atom.element = toks[0];
    for (int d = 0; d < 3; ++d)
      if (!parse_double(toks[static_cast<std::size_t>(d) + 1], &atom.pos[static_cast<std::size_t>(d)]))
        throw ParseError(static_cast<int>(li) + 1,
                         "unparseable coordinate '" + toks[static_cast<std::size_t>(d) + 1] + "'");
    mol.atoms.push_back(std::move(atom));
  }
  return mol;
}

RawMolecule parse_sdf_subset(const std::string& text) {
  const auto lines = split_lines(text);
  for (const auto& l : lines)
    if (l.find("V3000") != std::string::npos)
      throw ParseError(4, "V3000 connection tables are not supported, use V2000");
  if (lines.size() < 4) throw ParseError(4, "missing V2000 counts line");
  const std::string& counts = lines[3];
  const auto ctoks = tokens(counts);
  long natoms = 0, nbonds = 0;
  // Counts line fields are 3 characters wide; tolerate free-form spacing as
  // long as the first two integers parse.
  bool ok = ctoks.size() >= 2 && parse_int(ctoks[0], &natoms) && parse_int(ctoks[1], &nbonds);
  if (!ok && counts.size() >= 6)
    ok = parse_int(counts.substr(0, 3), &natoms) && parse_int(counts.substr(3, 3), &nbonds);
  if (!ok || natoms < 0 || nbonds < 0)
    throw ParseError(4, "malformed counts line: '" + counts + "'");
  RawMolecule mol;
  mol.has_bonds = true;
  for (long a = 0; a < natoms; ++a) {
    const std::size_t li = static_cast<std::size_t>(a) + 4;
    if (li >= lines.size())
      throw ParseError(static_cast<int>(li) + 1, "atom block ends early: expected " +
                                                     std::to_string(natoms) + " atoms");
    const auto toks = tokens(lines[li]);
    if (toks.size() < 4)
      throw ParseError(static_cast<int>(li) + 1, "expected `x y z symbol`, got '" + lines[li] + "'");
    RawAtom atom;
    for (int d = 0; d < 3; ++d)
      if (!parse_double(toks[static_cast<std::size_t>(d)], &atom.pos[static_cast<std::size_t>(d)]))
        throw ParseError(static_cast<int>(li) + 1,
                         "unparseable coordinate '" + toks[static_cast<std::size_t>(d)] + "'");
    if (element_number(toks[3]) == 0)
      throw ParseError(static_cast<int>(li) + 1, "unknown element symbol '" + toks[3] + "'");
    atom.element = toks[3];
    mol.atoms.push_back(std::move(atom));
  }
  for (long b = 0; b < nbonds; ++b) {
    const std::size_t li = static_cast<std::size_t>(natoms + b) + 4;
    if (li >= lines.size())
      throw ParseError(static_cast<int>(li) + 1, "bond block ends early: expected " +
                                                     std::to_string(nbonds) + " bonds");
    const auto toks = tokens(lines[li]);
    long i = 0, j = 0;
    if (toks.size() < 2 || !parse_int(toks[0], &i) || !parse_int(toks[1], &j))
      throw ParseError(static_cast<int>(li) + 1, "malformed bond line: '" + lines[li] + "'");
    if (i < 1 || i > natoms || j < 1 || j > natoms || i == j)
      throw ParseError(static_cast<int>(li) + 1, "bond (" + std::to_string(i) + ", " +
                                                     std::to_string(j) + ") references atoms outside 1.." +
                                                     std::to_string(natoms));
    mol.bonds.emplace_back(static_cast<int>(i) - 1, static_cast<int>(j) - 1);
  }
  return mol;
}

RawProtein parse_pdb_subset(const std::string& text) {
  const auto lines = split_lines(text);
  RawProtein prot;
  std::map<std::string, std::size_t> residue_index;  // (chain, seq, icode) -> index
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string& line = lines[li];
    if (line.rfind("ENDMDL", 0) == 0) break;  // only the first model
    if (line.rfind("ATOM", 0) != 0) continue;
    if (line.size() >= 6 && trim(line.substr(0, 6)) != "ATOM") continue;  // e.g. ATOMX
    if (line.size() < 54)
      throw ParseError(static_cast<int>(li) + 1,
                       "ATOM record shorter than the 54 columns needed for coordinates");
    const char alt = line[16];
    if (alt != ' ' && alt != 'A') continue;
    ResidueAtom atom;
    atom.name = trim(line.substr(12, 4));
    const std::string res_name = trim(line.substr(17, 3));
    const char chain = line[21];
    const std::string seq = trim(line.substr(22, 4));
    const char icode = line.size() > 26 ? line[26] : ' ';
    for (int d = 0; d < 3; ++d)
      if (!parse_double(line.substr(30 + 8 * static_cast<std::size_t>(d), 8),
                        &atom.pos[static_cast<std::size_t>(d)]))
        throw ParseError(static_cast<int>(li) + 1, "unparseable coordinate field in ATOM record");
    std::string element;
    if (line.size() >= 78) element = trim(line.substr(76, 2));
    if (element.empty() || element_number(element) == 0) {
      // fall back to the first alphabetic character of the atom name
      for (char c : atom.name)
        if (std::isalpha(static_cast<unsigned char>(c))) {
          element = std::string(1, c);
          break;
        }
    }
    if (element_number(element) == 0)
      throw ParseError(static_cast<int>(li) + 1, "cannot determine element for atom '" + atom.name + "'");
    atom.element = element;
    const std::string key = std::string(1, chain) + "|" + seq + "|" + std::string(1, icode);
    auto it = residue_index.find(key);
    if (it == residue_index.end()) {
      residue_index.emplace(key, prot.residues.size());
      prot.residues.push_back(Residue{res_name, chain, {}});
      it = residue_index.find(key);
    }
    Residue& res = prot.residues[it->second];
    bool duplicate = false;
    for (const auto& existing : res.atoms)
      if (existing.name == atom.name) {
        duplicate = true;  // keep the first occurrence
        break;
      }
    if (!duplicate) res.atoms.push_back(std::move(atom));
  }
  return prot;
}

std::string write_xyz(const RawMolecule& mol, const std::string& comment) {
  std::string out = std::to_string(mol.atoms.size()) + "\n" + comment + "\n";
  char buf[128];
  for (const auto& a : mol.atoms) {
    std::snprintf(buf, sizeof buf, "%s %.6f %.6f %.6f\n", a.element.c_str(), a.pos[0], a.pos[1],
                  a.pos[2]);
    out += buf;
  }
  return out;
}

}  // namespace ept
