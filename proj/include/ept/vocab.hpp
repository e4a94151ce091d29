#pragma once

#include <cstdint>
#include <string>

namespace ept {

/// Vocabulary index spaces. Three tables share the layout: a few special
/// codes up front, then the domain entries.
///
///   atom:      0 <pad>, 1 <mask>, 2 <global>, 3..120 elements H..Og
///   block:     0 <pad>, 1 <mask>, 2 <unk>, 3 <global>, 4..23 amino acids
///              (alphabetical by three-letter code), 24..141 elements
///   position:  0 <pad>, 1 <mask>, 2 <global>, 3..12 protein backbone and
///              side-chain remoteness codes (N, CA, C, O, B, G, D, E, Z, H),
///              13 <sml> for small-molecule atoms
struct Vocab {
  static constexpr std::uint16_t kAtomPad = 0, kAtomMask = 1, kAtomGlobal = 2;
  static constexpr std::uint16_t kBlockPad = 0, kBlockMask = 1, kBlockUnk = 2, kBlockGlobal = 3;
  static constexpr std::uint16_t kPosPad = 0, kPosMask = 1, kPosGlobal = 2, kPosSmall = 13;

  static constexpr std::int64_t kAtomSize = 121;   // 3 specials + 118 elements
  static constexpr std::int64_t kBlockSize = 142;  // 4 specials + 20 residues + 118 elements
  static constexpr std::int64_t kPosSize = 14;     // 3 specials + 10 protein codes + <sml>
};

enum class MolKind { kSmall, kProtein };

/// Atomic number for a normalized element symbol, 0 if unknown.
int element_number(const std::string& symbol);
/// Symbol for an atomic number 1..118; throws std::out_of_range otherwise.
const char* element_symbol(int z);

/// Atom vocabulary code for an element; element H is 3, so code = 2 + Z.
std::uint16_t atom_code(int z);
/// Block vocabulary code for a heavy element, range 24..141 (code = 23 + Z).
std::uint16_t block_code_element(int z);
/// Block vocabulary code for a residue name; unknown names -> <unk>.
std::uint16_t block_code_residue(const std::string& three_letter);

/// Position code. Small-molecule atoms always get <sml>. Protein atoms map
/// backbone names N/CA/C/O to 3..6 and side-chain remoteness letters
/// B,G,D,E,Z,H (second alphabetic character of the name) to 7..12; anything
/// else falls into the last bucket, 12.
std::uint16_t position_code(const std::string& atom_name, MolKind kind);

}  // namespace ept
