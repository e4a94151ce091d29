#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ept/molio.hpp"
#include "ept/rng.hpp"
#include "ept/tensor.hpp"

namespace ept {

/// Geometry is inconsistent with the block rules (e.g. a hydrogen with no
/// heavy atom to join).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single graph exceeds the batch vertex budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Thresholds {
  double delta_topo = 1.6;  // Å, topological contact cutoff
  double delta_max = 10.0;  // Å, maximum edge distance
};

enum class Domain : std::uint8_t { kSmall = 0, kProtein = 1 };

struct Edge {
  std::uint32_t i, j;
  std::uint8_t type;  // 0 intra-block, 1 close inter-block, 2 distant inter-block
  bool operator==(const Edge&) const = default;
};

/// Block-enhanced molecular graph. Atoms keep file order; blocks are
/// numbered contiguously in order of first appearance.
struct MolGraph {
  std::int64_t n = 0;  // atoms
  std::int64_t m = 0;  // blocks
  std::vector<std::uint16_t> atom_code;   // per atom
  std::vector<std::uint16_t> block_of;    // per atom, in 0..m-1
  std::vector<std::uint16_t> pos_code;    // per atom
  std::vector<std::uint16_t> block_code;  // per block
  std::vector<std::uint16_t> chain_of;    // per block; all 0 for small molecules
  Tensor coords;                          // n x 3, Å
  std::vector<Edge> edges;                // symmetric, sorted by (i, j)
  Domain domain = Domain::kSmall;
};

struct BlockAssignment {
  std::vector<std::uint16_t> block_of;
  std::vector<std::uint16_t> block_code;
};

/// One block per heavy atom; hydrogens join the block of a heavy atom they
/// bond to (bond table if present, else nearest heavy atom within 1.3 Å).
BlockAssignment assign_blocks_small(const RawMolecule& mol);

/// One block per residue; unknown residue names map to <unk>.
BlockAssignment assign_blocks_protein(const RawProtein& prot);

/// Minimum Euclidean distance between any atom of block a and any atom of
/// block b; 0 for a == b.
double block_distance(const Tensor& coords, const std::vector<std::uint16_t>& block_of,
                      std::int64_t a, std::int64_t b);

/// All typed edges under the thresholds, both directions, sorted by (i, j).
std::vector<Edge> classify_edges(const Tensor& coords, const std::vector<std::uint16_t>& block_of,
                                 const Thresholds& th);

MolGraph build_graph(const RawMolecule& mol, const Thresholds& th);
MolGraph build_graph(const RawProtein& prot, const Thresholds& th);

/// k consecutive residues starting at a uniformly chosen position within one
/// chain; shorter proteins come back whole.
RawProtein random_residue_segment(const RawProtein& prot, int k, RngStream& rng);

/// Subgraph of blocks [start, start+k), atoms reindexed, edges rebuilt.
MolGraph segment_blocks(const MolGraph& g, std::int64_t start, std::int64_t k,
                        const Thresholds& th);

/// Graph-level counterpart of random_residue_segment for stored graphs:
/// uniform contiguous k-block window within one chain.
MolGraph random_block_window(const MolGraph& g, std::int64_t k, const Thresholds& th,
                             RngStream& rng);

/// Graphs padded to a common length with an explicit mask.
struct GraphBatch {
  struct Member {
    std::int64_t n_real = 0;
    std::int64_t m = 0;
    std::vector<std::uint16_t> atom_code, block_of, pos_code;  // length n_max
    std::vector<std::uint16_t> block_code, chain_of;           // length m
    Tensor coords;  // n_max x 3, zero at padded rows
    std::vector<Edge> edges;
    Domain domain = Domain::kSmall;
  };
  std::int64_t n_max = 0;
  std::vector<Member> members;
  Tensor mask;  // B x n_max, 1 = real atom
};

/// Greedy first-fit packing in input order; every batch holds at most
/// max_vertices real atoms.
std::vector<GraphBatch> batch(const std::vector<MolGraph>& graphs, std::int64_t max_vertices);
std::vector<MolGraph> unbatch(const GraphBatch& b);

/// Binary shard IO, magic "EPTG", little-endian. Round-trips bit-exactly.
void save_shard(const std::string& path, const std::vector<MolGraph>& graphs);
std::vector<MolGraph> load_shard(const std::string& path);

}  // namespace ept
