#include "ept/blockgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include "ept/wire.hpp"

namespace ept {

namespace {

// Maximum H-to-heavy distance when no bond table is available.
constexpr double kHydrogenAttach = 1.3;

void check_thresholds(const Thresholds& th) {
  if (!(th.delta_topo > 0.0) || !(th.delta_topo < th.delta_max))
    throw std::invalid_argument("thresholds must satisfy 0 < delta_topo < delta_max");
}

double dist2(const Tensor& coords, std::int64_t i, std::int64_t j) {
  const double dx = coords.at(i, 0) - coords.at(j, 0);
  const double dy = coords.at(i, 1) - coords.at(j, 1);
  const double dz = coords.at(i, 2) - coords.at(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

std::vector<std::vector<std::int64_t>> block_atom_lists(const std::vector<std::uint16_t>& block_of,
                                                        std::int64_t m) {
  std::vector<std::vector<std::int64_t>> atoms(m);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(block_of.size()); ++i)
    atoms.at(block_of[i]).push_back(i);
  return atoms;
}

std::int64_t block_count(const std::vector<std::uint16_t>& block_of) {
  std::int64_t m = 0;
  for (std::uint16_t b : block_of) m = std::max(m, static_cast<std::int64_t>(b) + 1);
  return m;
}

int atomic_number_checked(const std::string& symbol, std::int64_t atom_index) {
  const int z = element_number(symbol);
  if (z == 0)
    throw StructuralError("atom " + std::to_string(atom_index) + ": unknown element '" + symbol +
                          "'");
  return z;
}

// Contiguous runs of blocks/residues sharing a chain id; each run yields
// every start of a full k-window. Returns window start indices.
template <typename ChainId>
std::vector<std::int64_t> window_starts(const std::vector<ChainId>& chain, std::int64_t k) {
  std::vector<std::int64_t> starts;
  const std::int64_t n = static_cast<std::int64_t>(chain.size());
  std::int64_t run_begin = 0;
  for (std::int64_t i = 1; i <= n; ++i) {
    if (i == n || chain[i] != chain[run_begin]) {
      for (std::int64_t s = run_begin; s + k <= i; ++s) starts.push_back(s);
      run_begin = i;
    }
  }
  return starts;
}

}  // namespace

BlockAssignment assign_blocks_small(const RawMolecule& mol) {
  const std::int64_t n = static_cast<std::int64_t>(mol.atoms.size());
  std::vector<int> z(n);
  for (std::int64_t i = 0; i < n; ++i) z[i] = atomic_number_checked(mol.atoms[i].element, i);

  BlockAssignment out;
  out.block_of.assign(n, 0);
  std::vector<std::int64_t> heavy_block(n, -1);
  for (std::int64_t i = 0; i < n; ++i) {
    if (z[i] == 1) continue;
    heavy_block[i] = static_cast<std::int64_t>(out.block_code.size());
    out.block_code.push_back(block_code_element(z[i]));
    out.block_of[i] = static_cast<std::uint16_t>(heavy_block[i]);
  }

  std::vector<std::vector<int>> adj;
  if (mol.has_bonds) {
    adj.resize(n);
    for (const auto& [a, b] : mol.bonds) {
      adj.at(a).push_back(b);
      adj.at(b).push_back(a);
    }
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (z[i] != 1) continue;
    std::int64_t host = -1;
    if (mol.has_bonds) {
      for (int nb : adj[i])
        if (z[nb] != 1 && (host < 0 || nb < host)) host = nb;
      if (host < 0)
        throw StructuralError("atom " + std::to_string(i) +
                              ": hydrogen has no bonded heavy atom");
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (std::int64_t jdx = 0; jdx < n; ++jdx) {
        if (z[jdx] == 1) continue;
        const double dx = mol.atoms[i].pos[0] - mol.atoms[jdx].pos[0];
        const double dy = mol.atoms[i].pos[1] - mol.atoms[jdx].pos[1];
        const double dz = mol.atoms[i].pos[2] - mol.atoms[jdx].pos[2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best) {
          best = d2;
          host = jdx;
        }
      }
      if (host < 0 || best > kHydrogenAttach * kHydrogenAttach)
        throw StructuralError("atom " + std::to_string(i) + ": no heavy atom within " +
                              std::to_string(kHydrogenAttach) + " A of hydrogen");
    }
    out.block_of[i] = static_cast<std::uint16_t>(heavy_block[host]);
  }
  return out;
}

BlockAssignment assign_blocks_protein(const RawProtein& prot) {
  BlockAssignment out;
  for (std::size_t r = 0; r < prot.residues.size(); ++r) {
    out.block_code.push_back(block_code_residue(prot.residues[r].name));
    for (std::size_t a = 0; a < prot.residues[r].atoms.size(); ++a)
      out.block_of.push_back(static_cast<std::uint16_t>(r));
  }
  return out;
}

double block_distance(const Tensor& coords, const std::vector<std::uint16_t>& block_of,
                      std::int64_t a, std::int64_t b) {
  if (a == b) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  const std::int64_t n = coords.rows();
  for (std::int64_t i = 0; i < n; ++i) {
    if (block_of[i] != a) continue;
    for (std::int64_t j = 0; j < n; ++j) {
      if (block_of[j] != b) continue;
      best = std::min(best, dist2(coords, i, j));
    }
  }
  return std::sqrt(best);
}

std::vector<Edge> classify_edges(const Tensor& coords, const std::vector<std::uint16_t>& block_of,
                                 const Thresholds& th) {
  check_thresholds(th);
  if (coords.rows() != static_cast<std::int64_t>(block_of.size()))
    throw std::invalid_argument("classify_edges: coords/block_of length mismatch");
  const std::int64_t m = block_count(block_of);
  const auto atoms = block_atom_lists(block_of, m);
  const double topo2 = th.delta_topo * th.delta_topo;
  const double max2 = th.delta_max * th.delta_max;

  std::vector<Edge> edges;
  auto push_pair = [&edges](std::int64_t i, std::int64_t j, std::uint8_t t) {
    edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), t});
    edges.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i), t});
  };

  for (std::int64_t a = 0; a < m; ++a) {
    for (std::size_t p = 0; p < atoms[a].size(); ++p)
      for (std::size_t q = p + 1; q < atoms[a].size(); ++q)
        push_pair(atoms[a][p], atoms[a][q], 0);
    for (std::int64_t b = a + 1; b < m; ++b) {
      double d2 = std::numeric_limits<double>::infinity();
      for (std::int64_t i : atoms[a])
        for (std::int64_t j : atoms[b]) d2 = std::min(d2, dist2(coords, i, j));
      std::uint8_t t;
      if (d2 <= topo2)
        t = 1;
      else if (d2 <= max2)
        t = 2;
      else
        continue;
      for (std::int64_t i : atoms[a])
        for (std::int64_t j : atoms[b]) push_pair(i, j, t);
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  return edges;
}

MolGraph build_graph(const RawMolecule& mol, const Thresholds& th) {
  if (mol.atoms.empty()) throw std::invalid_argument("cannot build a graph from an empty molecule");
  MolGraph g;
  g.domain = Domain::kSmall;
  g.n = static_cast<std::int64_t>(mol.atoms.size());
  auto assign = assign_blocks_small(mol);
  g.block_of = std::move(assign.block_of);
  g.block_code = std::move(assign.block_code);
  g.m = static_cast<std::int64_t>(g.block_code.size());
  g.chain_of.assign(g.m, 0);
  g.coords = Tensor({g.n, 3});
  for (std::int64_t i = 0; i < g.n; ++i) {
    g.atom_code.push_back(atom_code(element_number(mol.atoms[i].element)));
    g.pos_code.push_back(Vocab::kPosSmall);
    for (int c = 0; c < 3; ++c) g.coords.at(i, c) = mol.atoms[i].pos[c];
  }
  g.edges = classify_edges(g.coords, g.block_of, th);
  return g;
}

MolGraph build_graph(const RawProtein& prot, const Thresholds& th) {
  if (prot.residues.empty())
    throw std::invalid_argument("cannot build a graph from an empty protein");
  MolGraph g;
  g.domain = Domain::kProtein;
  auto assign = assign_blocks_protein(prot);
  g.block_of = std::move(assign.block_of);
  g.block_code = std::move(assign.block_code);
  g.n = static_cast<std::int64_t>(g.block_of.size());
  g.m = static_cast<std::int64_t>(g.block_code.size());
  if (g.n == 0) throw std::invalid_argument("cannot build a graph from a protein with no atoms");

  std::map<char, std::uint16_t> chain_ids;  // dense ids in order of first appearance
  g.coords = Tensor({g.n, 3});
  std::int64_t i = 0;
  for (const auto& res : prot.residues) {
    auto [it, fresh] =
        chain_ids.try_emplace(res.chain, static_cast<std::uint16_t>(chain_ids.size()));
    (void)fresh;
    g.chain_of.push_back(it->second);
    for (const auto& atom : res.atoms) {
      g.atom_code.push_back(atom_code(atomic_number_checked(atom.element, i)));
      g.pos_code.push_back(position_code(atom.name, MolKind::kProtein));
      for (int c = 0; c < 3; ++c) g.coords.at(i, c) = atom.pos[c];
      ++i;
    }
  }
  g.edges = classify_edges(g.coords, g.block_of, th);
  return g;
}

RawProtein random_residue_segment(const RawProtein& prot, int k, RngStream& rng) {
  if (k < 1) throw std::invalid_argument("segment length must be at least 1");
  std::vector<char> chain;
  for (const auto& res : prot.residues) chain.push_back(res.chain);
  const auto starts = window_starts(chain, k);
  if (starts.empty()) return prot;
  const std::int64_t s = starts[rng.index(starts.size())];
  RawProtein out;
  out.residues.assign(prot.residues.begin() + s, prot.residues.begin() + s + k);
  return out;
}

MolGraph segment_blocks(const MolGraph& g, std::int64_t start, std::int64_t k,
                        const Thresholds& th) {
  if (start < 0 || k < 1 || start + k > g.m)
    throw std::invalid_argument("block window [" + std::to_string(start) + ", " +
                                std::to_string(start + k) + ") out of range for " +
                                std::to_string(g.m) + " blocks");
  MolGraph out;
  out.domain = g.domain;
  out.m = k;
  out.block_code.assign(g.block_code.begin() + start, g.block_code.begin() + start + k);
  out.chain_of.assign(g.chain_of.begin() + start, g.chain_of.begin() + start + k);

  std::vector<std::int64_t> keep;
  for (std::int64_t i = 0; i < g.n; ++i)
    if (g.block_of[i] >= start && g.block_of[i] < start + k) keep.push_back(i);
  out.n = static_cast<std::int64_t>(keep.size());
  out.coords = Tensor({out.n, 3});
  for (std::int64_t r = 0; r < out.n; ++r) {
    const std::int64_t i = keep[r];
    out.atom_code.push_back(g.atom_code[i]);
    out.pos_code.push_back(g.pos_code[i]);
    out.block_of.push_back(static_cast<std::uint16_t>(g.block_of[i] - start));
    for (int c = 0; c < 3; ++c) out.coords.at(r, c) = g.coords.at(i, c);
  }
  out.edges = classify_edges(out.coords, out.block_of, th);
  return out;
}

MolGraph random_block_window(const MolGraph& g, std::int64_t k, const Thresholds& th,
                             RngStream& rng) {
  if (k < 1) throw std::invalid_argument("segment length must be at least 1");
  const auto starts = window_starts(g.chain_of, k);
  if (starts.empty()) return g;
  return segment_blocks(g, starts[rng.index(starts.size())], k, th);
}

std::vector<GraphBatch> batch(const std::vector<MolGraph>& graphs, std::int64_t max_vertices) {
  if (max_vertices < 1) throw std::invalid_argument("batch capacity must be positive");
  std::vector<std::vector<const MolGraph*>> groups;
  std::int64_t used = 0;
  for (const MolGraph& g : graphs) {
    if (g.n > max_vertices)
      throw CapacityError("graph with " + std::to_string(g.n) + " atoms exceeds batch capacity " +
                          std::to_string(max_vertices));
    if (groups.empty() || used + g.n > max_vertices) {
      groups.emplace_back();
      used = 0;
    }
    groups.back().push_back(&g);
    used += g.n;
  }

  std::vector<GraphBatch> out;
  for (const auto& group : groups) {
    GraphBatch b;
    for (const MolGraph* g : group) b.n_max = std::max(b.n_max, g->n);
    b.mask = Tensor({static_cast<std::int64_t>(group.size()), b.n_max});
    for (std::size_t gi = 0; gi < group.size(); ++gi) {
      const MolGraph& g = *group[gi];
      GraphBatch::Member mem;
      mem.n_real = g.n;
      mem.m = g.m;
      mem.domain = g.domain;
      mem.atom_code.assign(b.n_max, Vocab::kAtomPad);
      mem.block_of.assign(b.n_max, 0);
      mem.pos_code.assign(b.n_max, Vocab::kPosPad);
      std::copy(g.atom_code.begin(), g.atom_code.end(), mem.atom_code.begin());
      std::copy(g.block_of.begin(), g.block_of.end(), mem.block_of.begin());
      std::copy(g.pos_code.begin(), g.pos_code.end(), mem.pos_code.begin());
      mem.block_code = g.block_code;
      mem.chain_of = g.chain_of;
      mem.coords = Tensor({b.n_max, 3});
      for (std::int64_t i = 0; i < g.n; ++i) {
        b.mask.at(static_cast<std::int64_t>(gi), i) = 1.0;
        for (int c = 0; c < 3; ++c) mem.coords.at(i, c) = g.coords.at(i, c);
      }
      mem.edges = g.edges;
      b.members.push_back(std::move(mem));
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<MolGraph> unbatch(const GraphBatch& b) {
  std::vector<MolGraph> out;
  for (const auto& mem : b.members) {
    MolGraph g;
    g.n = mem.n_real;
    g.m = mem.m;
    g.domain = mem.domain;
    g.atom_code.assign(mem.atom_code.begin(), mem.atom_code.begin() + g.n);
    g.block_of.assign(mem.block_of.begin(), mem.block_of.begin() + g.n);
    g.pos_code.assign(mem.pos_code.begin(), mem.pos_code.begin() + g.n);
    g.block_code = mem.block_code;
    g.chain_of = mem.chain_of;
    g.coords = Tensor({g.n, 3});
    for (std::int64_t i = 0; i < g.n; ++i)
      for (int c = 0; c < 3; ++c) g.coords.at(i, c) = mem.coords.at(i, c);
    g.edges = mem.edges;
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

constexpr char kShardMagic[4] = {'E', 'P', 'T', 'G'};
constexpr std::uint16_t kShardVersion = 1;

}  // namespace

void save_shard(const std::string& path, const std::vector<MolGraph>& graphs) {
  using wire::put_f64;
  using wire::put_u16;
  using wire::put_u32;
  std::string s;
  s.append(kShardMagic, 4);
  put_u16(s, kShardVersion);
  put_u32(s, static_cast<std::uint32_t>(graphs.size()));
  for (const MolGraph& g : graphs) {
    wire::put_u8(s, static_cast<std::uint8_t>(g.domain));
    put_u32(s, static_cast<std::uint32_t>(g.n));
    put_u32(s, static_cast<std::uint32_t>(g.m));
    for (std::uint16_t v : g.atom_code) put_u16(s, v);
    for (std::uint16_t v : g.block_of) put_u16(s, v);
    for (std::uint16_t v : g.pos_code) put_u16(s, v);
    for (std::uint16_t v : g.block_code) put_u16(s, v);
    for (std::uint16_t v : g.chain_of) put_u16(s, v);
    for (std::int64_t i = 0; i < g.n; ++i)
      for (int c = 0; c < 3; ++c) put_f64(s, g.coords.at(i, c));
    put_u32(s, static_cast<std::uint32_t>(g.edges.size()));
    for (const Edge& e : g.edges) {
      put_u32(s, e.i);
      put_u32(s, e.j);
      wire::put_u8(s, e.type);
    }
  }
  wire::write_file(path, s, "shard");
}

std::vector<MolGraph> load_shard(const std::string& path) {
  const std::string data = wire::read_file(path, "shard");
  wire::Reader r{data, "shard"};
  r.need(4);
  if (std::memcmp(data.data(), kShardMagic, 4) != 0)
    throw std::runtime_error("not a graph shard: bad magic in " + path);
  r.off = 4;
  const std::uint16_t version = r.u16();
  if (version != kShardVersion)
    throw std::runtime_error("unsupported shard version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  std::vector<MolGraph> out;
  out.reserve(count);
  for (std::uint32_t gi = 0; gi < count; ++gi) {
    MolGraph g;
    const std::uint8_t dom = r.u8();
    if (dom > 1) throw std::runtime_error("shard corrupt: bad domain tag");
    g.domain = static_cast<Domain>(dom);
    g.n = r.u32();
    g.m = r.u32();
    g.atom_code.resize(g.n);
    g.block_of.resize(g.n);
    g.pos_code.resize(g.n);
    g.block_code.resize(g.m);
    g.chain_of.resize(g.m);
    for (auto& v : g.atom_code) v = r.u16();
    for (auto& v : g.block_of) v = r.u16();
    for (auto& v : g.pos_code) v = r.u16();
    for (auto& v : g.block_code) v = r.u16();
    for (auto& v : g.chain_of) v = r.u16();
    g.coords = Tensor({g.n, 3});
    for (std::int64_t i = 0; i < g.n; ++i)
      for (int c = 0; c < 3; ++c) g.coords.at(i, c) = r.f64();
    const std::uint32_t ne = r.u32();
    g.edges.resize(ne);
    for (auto& e : g.edges) {
      e.i = r.u32();
      e.j = r.u32();
      e.type = r.u8();
      if (e.i >= g.n || e.j >= g.n)
        throw std::runtime_error("shard corrupt: edge endpoint out of range");
    }
    for (std::uint16_t b : g.block_of)
      if (b >= g.m) throw std::runtime_error("shard corrupt: block index out of range");
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace ept
