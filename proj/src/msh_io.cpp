#include "dsdg/msh_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "dsdg/errors.hpp"

namespace dsdg {

namespace {

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") != std::string::npos) return true;
        }
        return false;
    }

    std::string expect_line(const char* what) {
        std::string line;
        if (!next(line)) throw ParseError(std::string("unexpected end of file, expected ") + what, number_ + 1);
        return line;
    }

    void expect_token(const std::string& token) {
        std::string line = expect_line(token.c_str());
        if (trim(line) != token) throw ParseError("expected '" + token + "', found '" + line + "'", number_);
    }

    std::size_t number() const { return number_; }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

struct RawLine {
    std::size_t a, b;
    int tag;
    std::size_t line;
};

Mesh parse(std::istream& in, const MshImportOptions& options) {
    LineReader reader(in);
    std::string line;
    bool have_format = false;
    std::vector<Point> vertices;
    std::unordered_map<long, std::size_t> node_index;
    std::vector<std::array<std::size_t, 3>> cells;
    std::vector<int> regions;
    std::vector<RawLine> lines;

    while (reader.next(line)) {
        const std::string section = LineReader::trim(line);
        if (section == "$MeshFormat") {
            std::istringstream ss(reader.expect_line("format header"));
            double version = 0.0;
            int file_type = -1;
            if (!(ss >> version >> file_type)) throw ParseError("malformed $MeshFormat header", reader.number());
            if (version < 2.0 || version >= 3.0) {
                throw ParseError("unsupported MSH version " + std::to_string(version), reader.number());
            }
            if (file_type != 0) throw ParseError("binary MSH files are not supported", reader.number());
            reader.expect_token("$EndMeshFormat");
            have_format = true;
        } else if (section == "$Nodes") {
            std::size_t n = 0;
            {
                std::istringstream ss(reader.expect_line("node count"));
                if (!(ss >> n)) throw ParseError("malformed node count", reader.number());
            }
            vertices.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::istringstream ss(reader.expect_line("node"));
                long id = 0;
                double x = 0, y = 0, z = 0;
                if (!(ss >> id >> x >> y >> z)) throw ParseError("malformed node record", reader.number());
                if (!node_index.emplace(id, vertices.size()).second) {
                    throw ParseError("duplicate node id " + std::to_string(id), reader.number());
                }
                vertices.push_back({x, y});
            }
            reader.expect_token("$EndNodes");
        } else if (section == "$Elements") {
            std::size_t n = 0;
            {
                std::istringstream ss(reader.expect_line("element count"));
                if (!(ss >> n)) throw ParseError("malformed element count", reader.number());
            }
            for (std::size_t i = 0; i < n; ++i) {
                std::istringstream ss(reader.expect_line("element"));
                long id = 0;
                int type = 0, ntags = 0;
                if (!(ss >> id >> type >> ntags) || ntags < 0) {
                    throw ParseError("malformed element record", reader.number());
                }
                std::vector<int> tags(static_cast<std::size_t>(ntags));
                for (auto& t : tags)
                    if (!(ss >> t)) throw ParseError("malformed element tags", reader.number());
                const int physical = tags.empty() ? 0 : tags[0];
                auto read_nodes = [&](std::size_t count) {
                    std::vector<std::size_t> out(count);
                    for (auto& o : out) {
                        long nid = 0;
                        if (!(ss >> nid)) throw ParseError("malformed element node list", reader.number());
                        auto it = node_index.find(nid);
                        if (it == node_index.end()) {
                            throw ParseError("element references unknown node " + std::to_string(nid),
                                             reader.number());
                        }
                        o = it->second;
                    }
                    return out;
                };
                switch (type) {
                    case 15:
                        break;
                    case 1: {
                        auto v = read_nodes(2);
                        lines.push_back({v[0], v[1], physical, reader.number()});
                        break;
                    }
                    case 2: {
                        auto v = read_nodes(3);
                        cells.push_back({v[0], v[1], v[2]});
                        regions.push_back(physical);
                        break;
                    }
                    default:
                        throw UnsupportedElementError("line " + std::to_string(reader.number()) +
                                                      ": unsupported element type " + std::to_string(type));
                }
            }
            reader.expect_token("$EndElements");
        } else if (!section.empty() && section[0] == '$') {
            // skip unknown sections such as $PhysicalNames
            const std::string end = "$End" + section.substr(1);
            while (true) {
                std::string l = reader.expect_line(end.c_str());
                if (LineReader::trim(l) == end) break;
            }
        } else {
            throw ParseError("unexpected content '" + line + "'", reader.number());
        }
    }
    if (!have_format) throw ParseError("missing $MeshFormat section", reader.number());
    if (cells.empty()) throw ParseError("file contains no triangles", reader.number());

    Mesh mesh(std::move(vertices), std::move(cells));
    std::vector<double> kappa(mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        auto it = options.kappa_by_tag.find(regions[c]);
        kappa[c] = it == options.kappa_by_tag.end() ? options.default_kappa : it->second;
    }
    mesh.set_kappa(std::move(kappa));
    mesh.set_regions(std::move(regions));

    for (const RawLine& l : lines) {
        const std::size_t f = mesh.find_face(l.a, l.b);
        if (f == npos) throw ParseError("line element is not an edge of the triangulation", l.line);
        if (!mesh.face(f).is_boundary()) continue;
        mesh.set_boundary_tag(f, l.tag);
        mesh.set_label(f, options.dirichlet_tags.count(l.tag) ? BoundaryLabel::Dirichlet : BoundaryLabel::Neumann);
    }
    return mesh;
}

void emit(std::ostream& out, const Mesh& mesh, const MshExportOptions& options) {
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    out << "$Nodes\n" << mesh.num_vertices() << '\n';
    out << std::setprecision(17);
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        out << v + 1 << ' ' << mesh.vertices()[v].x << ' ' << mesh.vertices()[v].y << " 0\n";
    }
    out << "$EndNodes\n";

    std::vector<std::size_t> boundary;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& face = mesh.face(f);
        if (face.is_boundary() && (face.label != BoundaryLabel::None || mesh.boundary_tag(f) != 0)) {
            boundary.push_back(f);
        }
    }
    out << "$Elements\n" << boundary.size() + mesh.num_cells() << '\n';
    std::size_t id = 1;
    for (std::size_t f : boundary) {
        const Face& face = mesh.face(f);
        int tag = mesh.boundary_tag(f);
        if (tag == 0) tag = face.label == BoundaryLabel::Dirichlet ? options.dirichlet_tag : options.neumann_tag;
        out << id++ << " 1 2 " << tag << ' ' << tag << ' ' << face.vertices[0] + 1 << ' ' << face.vertices[1] + 1
            << '\n';
    }
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto& v = mesh.cell(c);
        const int tag = mesh.region(c);
        out << id++ << " 2 2 " << tag << ' ' << tag << ' ' << v[0] + 1 << ' ' << v[1] + 1 << ' ' << v[2] + 1
            << '\n';
    }
    out << "$EndElements\n";
}

}  // namespace

Mesh read_msh(const std::string& path, const MshImportOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mesh file " + path);
    return parse(in, options);
}

Mesh read_msh_string(const std::string& text, const MshImportOptions& options) {
    std::istringstream in(text);
    return parse(in, options);
}

void write_msh(const Mesh& mesh, const std::string& path, const MshExportOptions& options) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write mesh file " + path);
    emit(out, mesh, options);
}

std::string write_msh_string(const Mesh& mesh, const MshExportOptions& options) {
    std::ostringstream out;
    emit(out, mesh, options);
    return out.str();
}

}  // namespace dsdg
