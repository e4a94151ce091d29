#include "ept/vocab.hpp"

#include <array>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

namespace ept {

namespace {

constexpr std::array<const char*, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// Twenty standard residues, alphabetical by three-letter code; block codes
// 4..23 follow this order.
constexpr std::array<const char*, 20> kResidues = {
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};

std::string normalize_symbol(const std::string& s) {
  std::string out;
  for (char c : s)
    if (std::isalpha(static_cast<unsigned char>(c))) out.push_back(c);
  if (out.empty()) return out;
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  for (std::size_t i = 1; i < out.size(); ++i)
    out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
  return out;
}

const std::unordered_map<std::string, int>& element_map() {
  static const auto* map = [] {
    auto* m = new std::unordered_map<std::string, int>();
    for (std::size_t i = 0; i < kElements.size(); ++i) (*m)[kElements[i]] = static_cast<int>(i) + 1;
    return m;
  }();
  return *map;
}

}  // namespace

int element_number(const std::string& symbol) {
  const std::string norm = normalize_symbol(symbol);
  auto it = element_map().find(norm);
  return it == element_map().end() ? 0 : it->second;
}

const char* element_symbol(int z) {
  if (z < 1 || z > 118) throw std::out_of_range("element_symbol: Z = " + std::to_string(z));
  return kElements[static_cast<std::size_t>(z - 1)];
}

std::uint16_t atom_code(int z) {
  if (z < 1 || z > 118) throw std::out_of_range("atom_code: Z = " + std::to_string(z));
  return static_cast<std::uint16_t>(2 + z);
}

std::uint16_t block_code_element(int z) {
  if (z < 1 || z > 118) throw std::out_of_range("block_code_element: Z = " + std::to_string(z));
  return static_cast<std::uint16_t>(23 + z);
}

std::uint16_t block_code_residue(const std::string& three_letter) {
  std::string upper;
  for (char c : three_letter)
    if (!std::isspace(static_cast<unsigned char>(c)))
      upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (std::size_t i = 0; i < kResidues.size(); ++i)
    if (upper == kResidues[i]) return static_cast<std::uint16_t>(4 + i);
  return Vocab::kBlockUnk;
}

std::uint16_t position_code(const std::string& atom_name, MolKind kind) {
  if (kind == MolKind::kSmall) return Vocab::kPosSmall;
  std::string name;
  for (char c : atom_name)
    if (std::isalpha(static_cast<unsigned char>(c)))
      name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (name == "N") return 3;
  if (name == "CA") return 4;
  if (name == "C") return 5;
  if (name == "O") return 6;
  if (name.size() >= 2) {
    switch (name[1]) {  // remoteness letter
      case 'B': return 7;
      case 'G': return 8;
      case 'D': return 9;
      case 'E': return 10;
      case 'Z': return 11;
      case 'H': return 12;
      default: break;
    }
  }
  return 12;  // last bucket for unmatched names
}

}  // namespace ept
