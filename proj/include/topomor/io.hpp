#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/krylov.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

/// Per-equation outcome of one design iteration.
struct EquationRecord {
    std::optional<double> mor_measure;  // set when a reduced solve was assessed
    SolverKind kind = SolverKind::FomFull;
    int cg_iterations = 0;
    long matvecs = 0;  // fine-level operator applications, reduced solves included
    int basis_size = 0;
    double final_measure = 0.0;  // measure of the field that was used
};

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double constraint = 0.0;
    EquationRecord forward;
    EquationRecord adjoint;
    double wall_time = 0.0;  // cumulative linear-solver time
    bool mma_flagged = false;

    [[nodiscard]] long matvecs() const { return forward.matvecs + adjoint.matvecs; }
};

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Legacy ASCII VTK structured-points file with one or more cell fields.
inline void write_fields(const StructuredGrid& grid,
                         const std::vector<std::pair<std::string, const Vector*>>& fields,
                         const std::string& path) {
    for (const auto& [name, f] : fields) {
        if (f->size() != grid.num_cells())
            throw UsageError("field '" + name + "' does not match the grid");
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw UsageError("field names must be non-empty and contain no whitespace");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const bool three = grid.dim() == 3;
    out << "# vtk DataFile Version 3.0\n";
    out << (fields.empty() ? std::string("empty") : fields.front().first) << "\n";
    out << "ASCII\nDATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << grid.dims(0) + 1 << " " << grid.dims(1) + 1 << " " << (three ? grid.dims(2) + 1 : 1)
        << "\n";
    out << "ORIGIN 0 0 0\n";
    out << "SPACING " << format_g17(grid.spacing(0)) << " " << format_g17(grid.spacing(1)) << " "
        << format_g17(three ? grid.spacing(2) : 1.0) << "\n";
    out << "CELL_DATA " << grid.num_cells() << "\n";
    for (const auto& [name, f] : fields) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (Index i = 0; i < f->size(); ++i) out << format_g17((*f)[i]) << "\n";
    }
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_field(const Vector& field, const StructuredGrid& grid, const std::string& path,
                        const std::string& name = "density") {
    write_fields(grid, {{name, &field}}, path);
}

struct VtkData {
    std::array<Index, 3> point_dims{};
    std::map<std::string, Vector> fields;
};

/// Reads files written by write_fields.
inline VtkData read_fields(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    VtkData d;
    std::string tok;
    Index n = -1;
    std::string line;
    std::getline(in, line);
    if (line.rfind("# vtk DataFile", 0) != 0) throw IoError("'" + path + "' is not a legacy VTK file");
    std::getline(in, line);  // title
    while (in >> tok) {
        if (tok == "DIMENSIONS") {
            in >> d.point_dims[0] >> d.point_dims[1] >> d.point_dims[2];
        } else if (tok == "CELL_DATA") {
            in >> n;
        } else if (tok == "SCALARS") {
            std::string name, type;
            int comps = 0;
            in >> name >> type >> comps >> tok >> tok;  // LOOKUP_TABLE default
            if (n < 0) throw IoError("'" + path + "': SCALARS before CELL_DATA");
            Vector v(n);
            for (Index i = 0; i < n; ++i) {
                std::string s;
                if (!(in >> s)) throw IoError("'" + path + "': truncated field '" + name + "'");
                const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v[i]);
                if (ec != std::errc() || end != s.data() + s.size())
                    throw IoError("'" + path + "': bad value '" + s + "' in field '" + name + "'");
            }
            d.fields.emplace(name, std::move(v));
        }
    }
    return d;
}

inline constexpr const char* kLogHeader =
    "iter,objective,constraint,w_fwd,w_adj,kind_fwd,kind_adj,cg_fwd,cg_adj,matvecs,basis_fwd,basis_adj,walltime_s";

/// Appends one row; writes the header first when the file is new or empty.
inline void append_log(const IterationRecord& r, const std::string& path) {
    bool need_header = true;
    {
        std::error_code ec;
        if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > 0) need_header = false;
    }
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for appending");
    if (need_header) out << kLogHeader << "\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); };
    out << r.iteration << "," << format_g17(r.objective) << "," << format_g17(r.constraint) << ","
        << opt(r.forward.mor_measure) << "," << opt(r.adjoint.mor_measure) << "," << to_string(r.forward.kind)
        << "," << to_string(r.adjoint.kind) << "," << r.forward.cg_iterations << "," << r.adjoint.cg_iterations
        << "," << r.matvecs() << "," << r.forward.basis_size << "," << r.adjoint.basis_size << ","
        << format_g17(r.wall_time) << "\n";
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace topomor
