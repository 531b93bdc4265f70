#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "easbo/errors.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Whitespace tokenizer that drops '#' comments to end of line.
class Tokens {
public:
    Tokens(std::string_view text, bool strip_comments, std::string source)
        : source_(std::move(source)) {
        std::string cur;
        bool comment = false;
        for (char ch : text) {
            if (ch == '\n') comment = false;
            if (strip_comments && ch == '#') comment = true;
            if (comment || std::isspace(static_cast<unsigned char>(ch))) {
                if (!cur.empty()) tokens_.push_back(std::move(cur)), cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        if (!cur.empty()) tokens_.push_back(std::move(cur));
    }

    bool done() const { return pos_ >= tokens_.size(); }
    const std::string& peek() const {
        if (done()) fail("unexpected end of file");
        return tokens_[pos_];
    }
    std::string next() {
        const auto& t = peek();
        ++pos_;
        return t;
    }
    double next_double() {
        auto t = next();
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0') fail("expected a number, got '" + t + "'");
        return v;
    }
    long long next_int() {
        auto t = next();
        char* end = nullptr;
        const long long v = std::strtoll(t.c_str(), &end, 10);
        if (end == t.c_str() || *end != '\0') fail("expected an integer, got '" + t + "'");
        return v;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(source_ + ": " + msg);
    }

private:
    std::vector<std::string> tokens_;
    std::size_t pos_ = 0;
    std::string source_;
};

std::uint32_t as_index(long long v, Tokens& tok) {
    if (v < 0) tok.fail("negative vertex index");
    return static_cast<std::uint32_t>(v);
}

struct RawMesh {
    std::vector<Vec3> vertices;
    std::vector<Simplex> simplices;
    int dimension = 2;
    std::vector<Vec3> fibers;
};

RawMesh parse_off(const fs::path& path) {
    const auto text = read_file(path);
    Tokens tok(text, true, path.string());
    auto head = tok.next();
    if (head != "OFF") tok.fail("missing OFF header");
    const auto nv = tok.next_int();
    const auto nf = tok.next_int();
    tok.next_int();  // edge count, unused
    if (nv <= 0 || nf <= 0) tok.fail("vertex and face counts must be positive");
    RawMesh m;
    m.vertices.reserve(static_cast<std::size_t>(nv));
    for (long long i = 0; i < nv; ++i) {
        const double x = tok.next_double();
        const double y = tok.next_double();
        const double z = tok.next_double();
        m.vertices.emplace_back(x, y, z);
    }
    for (long long f = 0; f < nf; ++f) {
        const auto k = tok.next_int();
        if (k != 3) tok.fail("only triangular faces are supported (face " + std::to_string(f) + ")");
        Simplex s{};
        for (int j = 0; j < 3; ++j) s[j] = as_index(tok.next_int(), tok);
        m.simplices.push_back(s);
    }
    return m;
}

RawMesh parse_vtk(const fs::path& path) {
    const auto text = read_file(path);
    std::istringstream lines(text);
    std::string header, title, encoding;
    std::getline(lines, header);
    std::getline(lines, title);
    std::getline(lines, encoding);
    if (header.rfind("# vtk DataFile", 0) != 0) throw ParseError(path.string() + ": missing VTK header");
    if (encoding.find("ASCII") == std::string::npos) {
        throw ParseError(path.string() + ": only ASCII legacy VTK is supported");
    }
    std::string rest((std::istreambuf_iterator<char>(lines)), std::istreambuf_iterator<char>());
    Tokens tok(rest, false, path.string());

    RawMesh m;
    std::vector<int> cell_types;
    bool unstructured = false;
    while (!tok.done()) {
        const auto key = tok.next();
        if (key == "DATASET") {
            const auto kind = tok.next();
            if (kind == "UNSTRUCTURED_GRID") unstructured = true;
            else if (kind != "POLYDATA") tok.fail("unsupported dataset " + kind);
        } else if (key == "POINTS") {
            const auto n = tok.next_int();
            tok.next();  // data type
            for (long long i = 0; i < n; ++i) {
                const double x = tok.next_double();
                const double y = tok.next_double();
                const double z = tok.next_double();
                m.vertices.emplace_back(x, y, z);
            }
        } else if (key == "POLYGONS" || key == "CELLS") {
            const auto n = tok.next_int();
            tok.next_int();
            for (long long c = 0; c < n; ++c) {
                const auto k = tok.next_int();
                if (k != 3 && k != 4) tok.fail("cells must be triangles or tetrahedra");
                if (key == "POLYGONS" && k != 3) tok.fail("POLYGONS must be triangles");
                Simplex s{};
                for (int j = 0; j < k; ++j) s[j] = as_index(tok.next_int(), tok);
                m.dimension = (k == 4) ? 3 : 2;
                m.simplices.push_back(s);
            }
        } else if (key == "CELL_TYPES") {
            const auto n = tok.next_int();
            for (long long c = 0; c < n; ++c) cell_types.push_back(static_cast<int>(tok.next_int()));
        } else if (key == "CELL_DATA") {
            tok.next_int();
        } else if (key == "POINT_DATA") {
            // Point fields are output-only; skip the remainder.
            break;
        } else if (key == "VECTORS") {
            tok.next();
            tok.next();
            for (std::size_t e = 0; e < m.simplices.size(); ++e) {
                const double x = tok.next_double();
                const double y = tok.next_double();
                const double z = tok.next_double();
                m.fibers.emplace_back(x, y, z);
            }
        } else if (key == "SCALARS") {
            tok.fail("CELL_DATA SCALARS are not supported");
        } else {
            tok.fail("unexpected keyword '" + key + "'");
        }
    }
    if (unstructured) {
        for (int t : cell_types) {
            if (t != 5 && t != 10) throw ParseError(path.string() + ": unsupported VTK cell type " + std::to_string(t));
        }
    }
    if (m.vertices.empty() || m.simplices.empty()) throw ParseError(path.string() + ": no POINTS or cells");
    return m;
}

std::vector<Vec3> sanitize_fibers(const RawMesh& m, std::vector<Vec3> fibers) {
    if (fibers.size() != m.simplices.size()) {
        throw ValidationError("fiber count " + std::to_string(fibers.size()) +
                              " does not match element count " + std::to_string(m.simplices.size()));
    }
    for (std::size_t e = 0; e < fibers.size(); ++e) {
        Vec3 f = fibers[e];
        if (m.dimension == 2) {
            const auto& s = m.simplices[e];
            if (s[0] >= m.vertices.size() || s[1] >= m.vertices.size() || s[2] >= m.vertices.size()) {
                continue;  // reported by mesh validation
            }
            Vec3 n = (m.vertices[s[1]] - m.vertices[s[0]]).cross(m.vertices[s[2]] - m.vertices[s[0]]);
            if (n.norm() == 0) continue;
            n.normalize();
            f -= f.dot(n) * n;
            if (f.norm() < 1e-6 * std::max(1.0, fibers[e].norm())) {
                throw ValidationError("fiber of element " + std::to_string(e) + " is normal to its triangle");
            }
            f.normalize();
            f -= f.dot(n) * n;
        }
        if (!(f.norm() > 0)) throw ValidationError("zero fiber at element " + std::to_string(e));
        fibers[e] = f.normalized();
    }
    return fibers;
}

}  // namespace

MeshFormat mesh_format_from_path(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".off" || ext == ".OFF") return MeshFormat::off;
    if (ext == ".vtk" || ext == ".VTK") return MeshFormat::vtk_legacy_ascii;
    throw ParseError("cannot infer mesh format from extension '" + ext + "'");
}

std::vector<Vec3> load_fibers(const fs::path& path) {
    const auto text = read_file(path);
    Tokens tok(text, true, path.string());
    std::vector<Vec3> fibers;
    while (!tok.done()) {
        const double x = tok.next_double();
        const double y = tok.next_double();
        const double z = tok.next_double();
        fibers.emplace_back(x, y, z);
    }
    return fibers;
}

SimplicialMesh load_mesh(const fs::path& path, MeshFormat format,
                         const std::optional<fs::path>& fiber_sidecar) {
    RawMesh m = format == MeshFormat::off ? parse_off(path) : parse_vtk(path);
    std::vector<Vec3> fibers;
    if (fiber_sidecar) {
        fibers = sanitize_fibers(m, load_fibers(*fiber_sidecar));
    } else if (!m.fibers.empty()) {
        fibers = sanitize_fibers(m, m.fibers);
    }
    if (fibers.empty()) {
        // Validate topology before building the default field.
        SimplicialMesh bare(m.vertices, m.simplices, m.dimension);
        fibers = make_fibers(m.vertices, m.simplices, m.dimension, FiberRule::azimuthal);
    }
    return SimplicialMesh(std::move(m.vertices), std::move(m.simplices), m.dimension, std::move(fibers));
}

void save_mesh(const SimplicialMesh& mesh, const fs::path& path, MeshFormat format, const std::string& title) {
    if (title.find('\n') != std::string::npos) throw PreconditionError("mesh title must be a single line");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const int k = mesh.vertices_per_simplex();
    if (format == MeshFormat::off) {
        if (mesh.dimension() != 2) throw PreconditionError("OFF output requires a surface mesh");
        out << "OFF\n";
        if (!title.empty()) out << "# " << title << '\n';
        out << mesh.num_vertices() << ' ' << mesh.num_simplices() << " 0\n";
        for (const auto& v : mesh.vertices()) {
            out << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' ' << fmt_double(v.z()) << '\n';
        }
        for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
            auto s = mesh.simplex(e);
            out << "3 " << s[0] << ' ' << s[1] << ' ' << s[2] << '\n';
        }
        return;
    }
    out << "# vtk DataFile Version 3.0\n" << (title.empty() ? std::string("easbo mesh") : title) << "\nASCII\n";
    out << (mesh.dimension() == 2 ? "DATASET POLYDATA\n" : "DATASET UNSTRUCTURED_GRID\n");
    out << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& v : mesh.vertices()) {
        out << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' ' << fmt_double(v.z()) << '\n';
    }
    out << (mesh.dimension() == 2 ? "POLYGONS " : "CELLS ") << mesh.num_simplices() << ' '
        << mesh.num_simplices() * static_cast<std::size_t>(k + 1) << '\n';
    for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
        out << k;
        for (auto v : mesh.simplex(e)) out << ' ' << v;
        out << '\n';
    }
    if (mesh.dimension() == 3) {
        out << "CELL_TYPES " << mesh.num_simplices() << '\n';
        for (std::size_t e = 0; e < mesh.num_simplices(); ++e) out << "10\n";
    }
    if (mesh.has_fibers()) {
        out << "CELL_DATA " << mesh.num_simplices() << "\nVECTORS fibers double\n";
        for (const auto& f : mesh.fibers()) {
            out << fmt_double(f.x()) << ' ' << fmt_double(f.y()) << ' ' << fmt_double(f.z()) << '\n';
        }
    }
}

void save_fibers(const SimplicialMesh& mesh, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& f : mesh.fibers()) {
        out << fmt_double(f.x()) << ' ' << fmt_double(f.y()) << ' ' << fmt_double(f.z()) << '\n';
    }
}

void save_vtk_point_field(const SimplicialMesh& mesh, std::span<const double> values,
                          const std::string& name, const fs::path& path, const std::string& title) {
    if (values.size() != mesh.num_vertices()) {
        throw PreconditionError("point field size does not match vertex count");
    }
    save_mesh(mesh, path, MeshFormat::vtk_legacy_ascii, title);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "POINT_DATA " << values.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : values) out << fmt_double(v) << '\n';
}

}  // namespace easbo
