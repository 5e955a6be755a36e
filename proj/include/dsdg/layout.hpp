/**
 * @file layout.hpp
 * @brief Non-overlapping partitions and the overlapping subdomain layout:
 *        owner sets, ℓ-layer extensions, interior interfaces, prediction
 *        strips and pairwise overlaps.
 */
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsdg/mesh.hpp"

namespace dsdg {

/// Owner map: cell → subdomain index in [0, count).
using OwnerMap = std::vector<std::size_t>;

/// Seeded greedy partitioner. Parts are grown from mutually distant seed cells,
/// always extending the currently smallest part by one face-adjacent cell, then
/// rebalanced so no part exceeds the mean size by more than 20% where the
/// geometry allows it.
OwnerMap partition_cells(const Mesh& mesh, std::size_t count, std::uint64_t seed);

struct Subdomain {
    CellSet owned;                                ///< Ω_i
    CellSet overlapped;                           ///< Ω_i^ℓ
    std::vector<std::size_t> interface_faces;     ///< ∂Ω_i^ℓ ∩ Ω, ascending
    CellSet prediction;                           ///< strip around the interface, both sides
    std::vector<std::size_t> dirichlet_faces;     ///< Dirichlet faces of Ω_i^ℓ, ascending
};

struct SubdomainLayout {
    OwnerMap owner;
    std::size_t layers = 0;
    std::vector<Subdomain> subdomains;
    /// Non-empty pairwise overlaps S_ij, keyed by (i, j) with i < j.
    std::map<std::pair<std::size_t, std::size_t>, CellSet> overlaps;
    /// Smallest distance between an interior interface and the owned region it extends.
    double overlap_width = 0.0;
    std::vector<std::string> warnings;

    std::size_t count() const { return subdomains.size(); }
    /// S_ij for any order of (i, j); empty if the subdomains do not overlap.
    CellSet overlap(std::size_t i, std::size_t j) const;
};

SubdomainLayout build_layout(const Mesh& mesh, const OwnerMap& owner, std::size_t layers);

/// Checks the structural invariants of a layout; returns a list of violations.
std::vector<std::string> validate_layout(const Mesh& mesh, const SubdomainLayout& layout);

}  // namespace dsdg
