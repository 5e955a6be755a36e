#pragma once

#include <map>
#include <set>
#include <string>

#include "dsdg/mesh.hpp"

namespace dsdg {

struct MshImportOptions {
    /// Physical surface tag → kappa. Tags missing from the map get `default_kappa`.
    std::map<int, double> kappa_by_tag;
    double default_kappa = 1.0;
    /// Physical line tags imported as Dirichlet; every other tagged line is Neumann.
    std::set<int> dirichlet_tags;
};

/// Reads a Gmsh MSH 2.2 ASCII file with 2D triangles. Triangle physical tags
/// become cell regions, line physical tags become boundary tags/labels.
Mesh read_msh(const std::string& path, const MshImportOptions& options = {});
Mesh read_msh_string(const std::string& text, const MshImportOptions& options = {});

struct MshExportOptions {
    /// Tags written for labeled boundary faces that have no imported tag.
    int dirichlet_tag = 1;
    int neumann_tag = 2;
};

void write_msh(const Mesh& mesh, const std::string& path, const MshExportOptions& options = {});
std::string write_msh_string(const Mesh& mesh, const MshExportOptions& options = {});

}  // namespace dsdg
