#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topomor/errors.hpp"

namespace topomor {

using Index = std::int32_t;

enum class Side : std::uint8_t { Low = 0, High = 1 };

enum class BcKind : std::uint8_t { Dirichlet, Neumann };

/// A rectangular block of boundary faces on one side of the box.
///
/// `tangential` holds half-open cell-index ranges along the axes normal to
/// `axis`, in increasing axis order. In 2D only the first entry is used.
struct FaceRegion {
    int axis = 0;
    Side side = Side::Low;
    std::array<std::pair<Index, Index>, 2> tangential{{{0, 0}, {0, 1}}};
};

/// Boundary condition applied to a set of faces. A patch flagged
/// `covers_remainder` takes every face not claimed by an explicit region.
struct BoundaryPatch {
    std::string name;
    std::vector<FaceRegion> regions;
    BcKind kind = BcKind::Neumann;
    double value = 0.0;  // Dirichlet temperature or Neumann inflow flux
    bool covers_remainder = false;
};

/// One of the 2*d faces of a cell: either an interior neighbor or a
/// boundary face carrying its patch index.
struct CellFace {
    int axis = 0;
    Side side = Side::Low;
    Index neighbor = -1;  // -1 on the boundary
    int patch = -1;       // -1 for interior faces

    [[nodiscard]] bool on_boundary() const { return neighbor < 0; }
};

struct BoundaryFace {
    Index cell = 0;
    int axis = 0;
    Side side = Side::Low;
    int patch = 0;
};

/// Cell-centered, axis-aligned box grid in 2 or 3 dimensions.
///
/// Linear cell indices are lexicographic with x fastest. Unused axes of a 2D
/// grid have one cell and unit thickness, so volumes and face areas carry
/// the out-of-plane extent 1.
class StructuredGrid {
public:
    StructuredGrid(std::vector<Index> dims, std::vector<double> extents,
                   std::vector<BoundaryPatch> patches)
        : dim_(static_cast<int>(dims.size())), patches_(std::move(patches)) {
        if (dim_ != 2 && dim_ != 3) throw ConfigError("grid must be 2D or 3D");
        if (extents.size() != dims.size())
            throw ConfigError("grid dims and extents differ in length");
        for (int a = 0; a < dim_; ++a) {
            if (dims[a] <= 0) throw ConfigError("grid dims must be positive");
            if (!(extents[a] > 0.0)) throw ConfigError("grid extents must be positive");
            dims_[a] = dims[a];
            extents_[a] = extents[a];
            spacing_[a] = extents[a] / static_cast<double>(dims[a]);
        }
        cell_volume_ = 1.0;
        for (int a = 0; a < dim_; ++a) cell_volume_ *= spacing_[a];
        for (int a = 0; a < 3; ++a) face_area_[a] = a < dim_ ? cell_volume_ / spacing_[a] : 0.0;
        num_cells_ = dims_[0] * dims_[1] * dims_[2];
        assign_patches();
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] Index num_cells() const { return num_cells_; }
    [[nodiscard]] Index dims(int axis) const { return dims_[axis]; }
    [[nodiscard]] double extent(int axis) const { return extents_[axis]; }
    [[nodiscard]] double spacing(int axis) const { return spacing_[axis]; }
    [[nodiscard]] double cell_volume() const { return cell_volume_; }
    [[nodiscard]] double face_area(int axis) const { return face_area_[axis]; }
    [[nodiscard]] double domain_volume() const {
        return cell_volume_ * static_cast<double>(num_cells_);
    }
    [[nodiscard]] double max_spacing() const {
        double h = 0.0;
        for (int a = 0; a < dim_; ++a) h = std::max(h, spacing_[a]);
        return h;
    }
    [[nodiscard]] const std::vector<BoundaryPatch>& patches() const { return patches_; }
    [[nodiscard]] std::vector<Index> dims_vector() const {
        return {dims_.begin(), dims_.begin() + dim_};
    }

    [[nodiscard]] Index linear(Index i, Index j, Index k = 0) const {
        return i + dims_[0] * (j + dims_[1] * k);
    }
    [[nodiscard]] std::array<Index, 3> coords(Index cell) const {
        return {cell % dims_[0], (cell / dims_[0]) % dims_[1], cell / (dims_[0] * dims_[1])};
    }
    [[nodiscard]] std::array<double, 3> center(Index cell) const {
        auto c = coords(cell);
        return {(c[0] + 0.5) * spacing_[0], (c[1] + 0.5) * spacing_[1],
                dim_ == 3 ? (c[2] + 0.5) * spacing_[2] : 0.0};
    }

    /// The 2*d faces of `cell` in the order (axis 0 low, axis 0 high, axis 1 low, ...).
    [[nodiscard]] std::vector<CellFace> neighbors(Index cell) const {
        if (cell < 0 || cell >= num_cells_) throw UsageError("cell index out of range");
        std::vector<CellFace> out;
        out.reserve(2 * dim_);
        for_each_face(cell, [&](const CellFace& f) { out.push_back(f); });
        return out;
    }

    /// Visit the faces of `cell` without allocating. No bounds check.
    template <class Fn>
    void for_each_face(Index cell, Fn&& fn) const {
        const auto c = coords(cell);
        Index stride = 1;
        for (int a = 0; a < dim_; ++a) {
            CellFace lo{a, Side::Low, -1, -1};
            if (c[a] > 0) lo.neighbor = cell - stride;
            else lo.patch = face_patch_[face_slot(a, Side::Low)][tangential_index(a, c)];
            fn(lo);
            CellFace hi{a, Side::High, -1, -1};
            if (c[a] + 1 < dims_[a]) hi.neighbor = cell + stride;
            else hi.patch = face_patch_[face_slot(a, Side::High)][tangential_index(a, c)];
            fn(hi);
            stride *= dims_[a];
        }
    }

    [[nodiscard]] std::vector<BoundaryFace> boundary_faces() const {
        std::vector<BoundaryFace> out;
        for (Index cell = 0; cell < num_cells_; ++cell)
            for_each_face(cell, [&](const CellFace& f) {
                if (f.on_boundary()) out.push_back({cell, f.axis, f.side, f.patch});
            });
        return out;
    }

    [[nodiscard]] bool has_dirichlet() const {
        for (int s = 0; s < 2 * dim_; ++s)
            for (int p : face_patch_[s])
                if (patches_[p].kind == BcKind::Dirichlet) return true;
        return false;
    }

    /// Region on face (axis, side) covering every face whose center lies in
    /// the given physical ranges along the tangential axes.
    static FaceRegion region_from_box(const std::vector<Index>& dims,
                                      const std::vector<double>& extents, int axis, Side side,
                                      const std::vector<std::pair<double, double>>& ranges) {
        const int d = static_cast<int>(dims.size());
        FaceRegion r{axis, side, {{{0, 1}, {0, 1}}}};
        int t = 0;
        for (int a = 0; a < d; ++a) {
            if (a == axis) continue;
            const double h = extents[a] / static_cast<double>(dims[a]);
            const double tol = 1e-9 * extents[a];
            Index lo = dims[a], hi = 0;
            const auto [plo, phi] = t < static_cast<int>(ranges.size())
                                        ? ranges[t]
                                        : std::pair<double, double>{0.0, extents[a]};
            for (Index i = 0; i < dims[a]; ++i) {
                const double x = (i + 0.5) * h;
                if (x >= plo - tol && x <= phi + tol) {
                    lo = std::min(lo, i);
                    hi = std::max(hi, i + 1);
                }
            }
            if (lo >= hi) lo = hi = 0;
            r.tangential[t++] = {lo, hi};
        }
        return r;
    }

private:
    static int face_slot(int axis, Side side) { return 2 * axis + static_cast<int>(side); }

    // Index of a boundary face within its (axis, side) face array.
    [[nodiscard]] Index tangential_index(int axis, const std::array<Index, 3>& c) const {
        Index idx = 0, stride = 1;
        for (int a = 0; a < dim_; ++a) {
            if (a == axis) continue;
            idx += c[a] * stride;
            stride *= dims_[a];
        }
        return idx;
    }

    void assign_patches() {
        int remainder = -1;
        for (int p = 0; p < static_cast<int>(patches_.size()); ++p) {
            if (!patches_[p].covers_remainder) continue;
            if (remainder >= 0) throw ConfigError("more than one remainder boundary patch");
            remainder = p;
        }
        for (int a = 0; a < dim_; ++a) {
            Index count = 1;
            std::array<int, 2> tang{};
            int t = 0;
            for (int b = 0; b < dim_; ++b)
                if (b != a) {
                    count *= dims_[b];
                    tang[t++] = b;
                }
            for (Side s : {Side::Low, Side::High}) {
                auto& slot = face_patch_[face_slot(a, s)];
                slot.assign(count, -1);
                for (int p = 0; p < static_cast<int>(patches_.size()); ++p)
                    for (const auto& reg : patches_[p].regions) {
                        if (reg.axis != a || reg.side != s) continue;
                        const auto [i0, i1] = reg.tangential[0];
                        const auto [j0, j1] = dim_ == 3 ? reg.tangential[1] : std::pair<Index, Index>{0, 1};
                        if (i0 < 0 || j0 < 0 || i1 > dims_[tang[0]] ||
                            (dim_ == 3 && j1 > dims_[tang[1]]))
                            throw ConfigError("patch '" + patches_[p].name + "' exceeds the grid");
                        for (Index j = j0; j < j1; ++j)
                            for (Index i = i0; i < i1; ++i) {
                                const Index idx = i + (dim_ == 3 ? j * dims_[tang[0]] : 0);
                                if (slot[idx] >= 0)
                                    throw ConfigError("boundary patches '" + patches_[slot[idx]].name +
                                                      "' and '" + patches_[p].name + "' overlap");
                                slot[idx] = p;
                            }
                    }
                for (auto& v : slot) {
                    if (v >= 0) continue;
                    if (remainder < 0) throw ConfigError("boundary patches do not cover every boundary face");
                    v = remainder;
                }
            }
        }
    }

    int dim_;
    std::array<Index, 3> dims_{1, 1, 1};
    std::array<double, 3> extents_{1.0, 1.0, 1.0};
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<double, 3> face_area_{0.0, 0.0, 0.0};
    double cell_volume_ = 1.0;
    Index num_cells_ = 0;
    std::vector<BoundaryPatch> patches_;
    std::array<std::vector<int>, 6> face_patch_;
};

/// Convenience: one patch covering the whole boundary.
inline BoundaryPatch whole_boundary(std::string name, BcKind kind, double value) {
    BoundaryPatch p;
    p.name = std::move(name);
    p.kind = kind;
    p.value = value;
    p.covers_remainder = true;
    return p;
}

/// Convenience: a patch covering an entire side of the box.
inline BoundaryPatch full_side(std::string name, int axis, Side side, BcKind kind, double value,
                               const std::vector<Index>& dims) {
    BoundaryPatch p;
    p.name = std::move(name);
    p.kind = kind;
    p.value = value;
    FaceRegion r{axis, side, {{{0, 1}, {0, 1}}}};
    int t = 0;
    for (int a = 0; a < static_cast<int>(dims.size()); ++a)
        if (a != axis) r.tangential[t++] = {0, dims[a]};
    p.regions.push_back(r);
    return p;
}

}  // namespace topomor
