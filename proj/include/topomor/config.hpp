#pragma once

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "topomor/assembly.hpp"
#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/krylov.hpp"
#include "topomor/multigrid.hpp"

namespace topomor {

enum class FomMode { FullAccuracy, OneShot };

struct SolverStrategy {
    FomMode mode = FomMode::FullAccuracy;
    bool mor_enabled = false;
    int r_forward = 2;
    int r_adjoint = 2;
    double tau_fom = 1e-13;
    double tau_mor = 5e-6;
    Criterion criterion = Criterion::W2;
    int max_cg_iterations = 500;
    bool mor_warm_start = true;
    double mg_correction_scale = kDefaultCorrectionScale;

    void validate() const {
        if (!(tau_fom > 0.0)) throw ConfigError("solver.tau_fom must be positive");
        if (mor_enabled && !(tau_mor > 0.0)) throw ConfigError("solver.tau_mor must be positive");
        if (r_forward < 1 || r_adjoint < 1) throw ConfigError("solver.r_forward and solver.r_adjoint must be at least 1");
        if (max_cg_iterations < 1) throw ConfigError("solver.max_cg_iterations must be at least 1");
        if (!(mg_correction_scale > 0.0 && mg_correction_scale < 2.0))
            throw ConfigError("solver.mg_correction_scale must lie in (0, 2)");
    }

    bool operator==(const SolverStrategy&) const = default;
};

/// Strategy names: MGCG, MGCG_1, MOR_<r>_MGCG, MOR_<r>_MGCG_1.
inline std::string strategy_name(const SolverStrategy& s) {
    std::string name;
    if (s.mor_enabled) {
        name = "MOR_" + std::to_string(s.r_forward);
        if (s.r_adjoint != s.r_forward) name += "-" + std::to_string(s.r_adjoint);
        name += "_";
    }
    name += "MGCG";
    if (s.mode == FomMode::OneShot) name += "_1";
    return name;
}

/// Applies a strategy name on top of `base` (tolerances kept).
inline SolverStrategy strategy_from_name(const std::string& name, SolverStrategy base = {}) {
    static const std::regex re(R"(^(?:MOR_([0-9]+)_)?MGCG(_1)?$)");
    std::smatch m;
    if (!std::regex_match(name, m, re)) throw ConfigError("unknown solver strategy '" + name + "'");
    base.mor_enabled = m[1].matched;
    if (m[1].matched) base.r_forward = base.r_adjoint = std::stoi(m[1].str());
    base.mode = m[2].matched ? FomMode::OneShot : FomMode::FullAccuracy;
    return base;
}

/// Boundary patch given in physical coordinates. `range` holds one interval
/// per tangential axis (in increasing axis order); empty means the whole side.
struct PatchSpec {
    std::string name;
    int axis = 0;
    Side side = Side::Low;
    BcKind kind = BcKind::Neumann;
    double value = 0.0;
    std::vector<std::pair<double, double>> range;

    bool operator==(const PatchSpec&) const = default;
};

struct RunConfig {
    std::vector<Index> dims;
    std::vector<double> extents;
    std::vector<PatchSpec> patches;  // remaining boundary is insulated
    double source = 0.0;
    SimpParams simp;
    std::optional<double> filter_length;  // otherwise support_cells * spacing / (2 sqrt 3)
    double filter_support_cells = 2.0;
    double t_ref = 0.0;
    double volume_fraction = 0.0;
    double move_limit = 0.1;
    int max_iterations = 250;
    SolverStrategy solver;
    std::string output_dir = "out";
    int checkpoint_interval = 0;

    bool operator==(const RunConfig&) const = default;

    [[nodiscard]] double resolved_filter_length() const {
        if (filter_length) return *filter_length;
        double h = 0.0;
        for (std::size_t a = 0; a < dims.size(); ++a) h = std::max(h, extents[a] / dims[a]);
        return filter_length_from_support(filter_support_cells * h);
    }

    void validate() const {
        if (dims.size() != 2 && dims.size() != 3) throw ConfigError("grid.dims needs 2 or 3 entries");
        if (extents.size() != dims.size()) throw ConfigError("grid.extents must match grid.dims");
        for (Index d : dims)
            if (d < 1) throw ConfigError("grid.dims entries must be positive");
        for (double e : extents)
            if (!(e > 0.0)) throw ConfigError("grid.extents entries must be positive");
        simp.validate();
        if (filter_length && !(*filter_length >= 0.0)) throw ConfigError("filter.length must be >= 0");
        if (!(filter_support_cells >= 0.0)) throw ConfigError("filter.support_cells must be >= 0");
        if (!(volume_fraction > 0.0 && volume_fraction <= 1.0))
            throw ConfigError("optimizer.volume_fraction must lie in (0, 1]");
        if (!(move_limit > 0.0 && move_limit <= 1.0))
            throw ConfigError("optimizer.move_limit must lie in (0, 1]");
        if (max_iterations < 0) throw ConfigError("optimizer.max_iterations must be >= 0");
        if (checkpoint_interval < 0) throw ConfigError("output.checkpoint_interval must be >= 0");
        if (!std::isfinite(source)) throw ConfigError("source.q must be finite");
        if (!std::isfinite(t_ref)) throw ConfigError("objective.t_ref must be finite");
        solver.validate();
        bool dirichlet = false;
        for (const auto& p : patches) {
            if (p.axis >= static_cast<int>(dims.size()))
                throw ConfigError("patch '" + p.name + "' lies on a face the grid does not have");
            if (!p.range.empty() && p.range.size() + 1 != dims.size())
                throw ConfigError("patch '" + p.name + "' range needs one interval per tangential axis");
            for (const auto& [lo, hi] : p.range)
                if (!(hi > lo)) throw ConfigError("patch '" + p.name + "' has an empty range");
            dirichlet |= p.kind == BcKind::Dirichlet;
        }
        if (!dirichlet) throw ConfigError("at least one Dirichlet patch is required");
    }
};

/// Builds the grid, turning physical patch ranges into face regions and
/// insulating every face no patch claims.
inline StructuredGrid build_grid(const RunConfig& cfg) {
    std::vector<BoundaryPatch> patches;
    for (const auto& p : cfg.patches) {
        BoundaryPatch b;
        b.name = p.name;
        b.kind = p.kind;
        b.value = p.value;
        const auto r = StructuredGrid::region_from_box(cfg.dims, cfg.extents, p.axis, p.side, p.range);
        bool empty = r.tangential[0].first >= r.tangential[0].second;
        if (cfg.dims.size() == 3) empty |= r.tangential[1].first >= r.tangential[1].second;
        if (empty) throw ConfigError("patch '" + p.name + "' selects no boundary faces");
        b.regions.push_back(r);
        patches.push_back(std::move(b));
    }
    patches.push_back(whole_boundary("insulated", BcKind::Neumann, 0.0));
    return StructuredGrid(cfg.dims, cfg.extents, std::move(patches));
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v, const char* seps = " ,\t") {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < v.size()) {
        const auto b = v.find_first_not_of(seps, i);
        if (b == std::string::npos) break;
        const auto e = v.find_first_of(seps, b);
        out.push_back(v.substr(b, e == std::string::npos ? std::string::npos : e - b));
        i = e == std::string::npos ? v.size() : e;
    }
    return out;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v))
        throw ConfigError("expected a number, got '" + s + "'");
    return v;
}

inline long parse_int(const std::string& s) {
    long v = 0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline const char* face_name(int axis, Side side) {
    static const char* names[3][2] = {{"xmin", "xmax"}, {"ymin", "ymax"}, {"zmin", "zmax"}};
    return names[axis][static_cast<int>(side)];
}

inline std::pair<int, Side> parse_face(const std::string& s) {
    for (int a = 0; a < 3; ++a)
        for (Side sd : {Side::Low, Side::High})
            if (s == face_name(a, sd)) return {a, sd};
    throw ConfigError("unknown face '" + s + "' (expected xmin, xmax, ymin, ymax, zmin or zmax)");
}

// "a:b" or "a:b,c:d"
inline std::vector<std::pair<double, double>> parse_range(const std::string& s) {
    std::vector<std::pair<double, double>> out;
    for (const auto& part : split_list(s, ", \t")) {
        const auto c = part.find(':');
        if (c == std::string::npos) throw ConfigError("range '" + part + "' must look like lo:hi");
        out.emplace_back(parse_double(part.substr(0, c)), parse_double(part.substr(c + 1)));
    }
    return out;
}

}  // namespace detail

/// Built-in benchmark cases.
inline std::vector<std::string> preset_names() { return {"paper-2d", "paper-3d"}; }

inline RunConfig preset(const std::string& name) {
    RunConfig c;
    if (name == "paper-2d") {
        c.dims = {360, 360};
        c.extents = {12.0, 12.0};
        c.patches = {{"hot", 1, Side::High, BcKind::Dirichlet, 300.0, {{4.0, 8.0}}}};
        c.source = 1000.0;
        c.t_ref = 300.0;
        c.volume_fraction = 0.4;
        c.max_iterations = 500;
        c.solver.mor_enabled = true;
        c.solver.r_forward = c.solver.r_adjoint = 10;
        c.solver.tau_mor = 1e-6;
        return c;
    }
    if (name == "paper-3d") {
        c.dims = {200, 200, 200};
        c.extents = {1.0, 1.0, 1.0};
        c.patches = {{"sink", 2, Side::Low, BcKind::Dirichlet, 273.0, {{0.25, 0.75}, {0.25, 0.75}}}};
        c.source = 1e4;
        c.t_ref = 273.0;
        c.volume_fraction = 0.05;
        c.max_iterations = 250;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

/// One `key = value` assignment with its origin for error messages.
struct ConfigLine {
    std::string key;
    std::string value;
    std::string where;
};

inline std::vector<ConfigLine> tokenize_config(const std::string& text, const std::string& origin = "line") {
    std::vector<ConfigLine> out;
    std::istringstream in(text);
    std::string raw;
    int no = 0;
    while (std::getline(in, raw)) {
        ++no;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + " " + std::to_string(no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        ConfigLine l{detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), where};
        if (l.key.empty()) throw ConfigError(where + ": missing key");
        if (l.value.empty()) throw ConfigError(where + ": missing value for '" + l.key + "'");
        out.push_back(std::move(l));
    }
    return out;
}

inline const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys{
        "grid.dims", "grid.extents", "patch.<name>.face", "patch.<name>.kind", "source.q",
        "objective.t_ref", "optimizer.volume_fraction"};
    return keys;
}

/// Parses configuration text (plus optional override lines applied last).
/// A `preset` key seeds every value before the remaining keys are applied.
inline RunConfig parse_config(const std::string& text, const std::vector<ConfigLine>& overrides = {}) {
    std::vector<ConfigLine> lines = tokenize_config(text);
    lines.insert(lines.end(), overrides.begin(), overrides.end());

    RunConfig c;
    std::map<std::string, bool> seen;
    bool from_preset = false;
    for (const auto& l : lines)
        if (l.key == "preset") {
            if (from_preset) throw ConfigError(l.where + ": preset given twice");
            try {
                c = preset(l.value);
            } catch (const ConfigError& e) {
                throw ConfigError(l.where + ": " + e.what());
            }
            from_preset = true;
        }
    if (lines.empty()) {
        std::string msg = "empty configuration; required keys:";
        for (const auto& k : required_keys()) msg += " " + k;
        throw ConfigError(msg);
    }

    auto find_patch = [&](const std::string& name) -> PatchSpec& {
        for (auto& p : c.patches)
            if (p.name == name) return p;
        PatchSpec fresh;
        fresh.name = name;
        c.patches.push_back(std::move(fresh));
        return c.patches.back();
    };
    std::map<std::string, std::pair<bool, bool>> patch_keys;  // face, kind given
    for (const auto& p : c.patches) patch_keys[p.name] = {true, true};

    for (const auto& l : lines) {
        if (l.key == "preset") continue;
        const std::string& v = l.value;
        try {
            seen[l.key] = true;
            if (l.key == "grid.dims") {
                c.dims.clear();
                for (const auto& t : detail::split_list(v)) c.dims.push_back(static_cast<Index>(detail::parse_int(t)));
            } else if (l.key == "grid.extents") {
                c.extents.clear();
                for (const auto& t : detail::split_list(v)) c.extents.push_back(detail::parse_double(t));
            } else if (l.key == "source.q") {
                c.source = detail::parse_double(v);
            } else if (l.key == "material.kappa_min") {
                c.simp.kappa_min = detail::parse_double(v);
            } else if (l.key == "material.kappa_max") {
                c.simp.kappa_max = detail::parse_double(v);
            } else if (l.key == "material.penal") {
                c.simp.penal = detail::parse_double(v);
            } else if (l.key == "filter.length") {
                if (v == "rule") c.filter_length.reset();
                else c.filter_length = detail::parse_double(v);
            } else if (l.key == "filter.support_cells") {
                c.filter_support_cells = detail::parse_double(v);
            } else if (l.key == "objective.t_ref") {
                c.t_ref = detail::parse_double(v);
            } else if (l.key == "optimizer.volume_fraction") {
                c.volume_fraction = detail::parse_double(v);
            } else if (l.key == "optimizer.move_limit") {
                c.move_limit = detail::parse_double(v);
            } else if (l.key == "optimizer.max_iterations") {
                c.max_iterations = static_cast<int>(detail::parse_int(v));
            } else if (l.key == "solver.strategy") {
                c.solver = strategy_from_name(v, c.solver);
            } else if (l.key == "solver.mode") {
                if (v == "full") c.solver.mode = FomMode::FullAccuracy;
                else if (v == "oneshot") c.solver.mode = FomMode::OneShot;
                else throw ConfigError("solver.mode must be 'full' or 'oneshot'");
            } else if (l.key == "solver.mor") {
                c.solver.mor_enabled = detail::parse_bool(v);
            } else if (l.key == "solver.r") {
                c.solver.r_forward = c.solver.r_adjoint = static_cast<int>(detail::parse_int(v));
            } else if (l.key == "solver.r_forward") {
                c.solver.r_forward = static_cast<int>(detail::parse_int(v));
            } else if (l.key == "solver.r_adjoint") {
                c.solver.r_adjoint = static_cast<int>(detail::parse_int(v));
            } else if (l.key == "solver.tau_fom") {
                c.solver.tau_fom = detail::parse_double(v);
            } else if (l.key == "solver.tau_mor") {
                c.solver.tau_mor = detail::parse_double(v);
            } else if (l.key == "solver.criterion") {
                if (v == "w1" || v == "W1") c.solver.criterion = Criterion::W1;
                else if (v == "w2" || v == "W2") c.solver.criterion = Criterion::W2;
                else throw ConfigError("solver.criterion must be w1 or w2");
            } else if (l.key == "solver.max_cg_iterations") {
                c.solver.max_cg_iterations = static_cast<int>(detail::parse_int(v));
            } else if (l.key == "solver.mor_warm_start") {
                c.solver.mor_warm_start = detail::parse_bool(v);
            } else if (l.key == "solver.mg_correction_scale") {
                c.solver.mg_correction_scale = detail::parse_double(v);
            } else if (l.key == "output.dir") {
                c.output_dir = v;
            } else if (l.key == "output.checkpoint_interval") {
                c.checkpoint_interval = static_cast<int>(detail::parse_int(v));
            } else if (l.key.rfind("patch.", 0) == 0) {
                const auto dot = l.key.rfind('.');
                const std::string name = l.key.substr(6, dot - 6);
                const std::string field = l.key.substr(dot + 1);
                if (name.empty() || dot <= 6) throw ConfigError("malformed patch key '" + l.key + "'");
                if (field != "face" && field != "kind" && field != "value" && field != "range")
                    throw ConfigError("unknown key '" + l.key + "'");
                PatchSpec& p = find_patch(name);
                auto& given = patch_keys[name];
                if (field == "face") {
                    std::tie(p.axis, p.side) = detail::parse_face(v);
                    given.first = true;
                } else if (field == "kind") {
                    if (v == "dirichlet") p.kind = BcKind::Dirichlet;
                    else if (v == "neumann") p.kind = BcKind::Neumann;
                    else throw ConfigError("patch kind must be dirichlet or neumann");
                    given.second = true;
                } else if (field == "value") {
                    p.value = detail::parse_double(v);
                } else {
                    p.range = v == "all" ? std::vector<std::pair<double, double>>{} : detail::parse_range(v);
                }
            } else {
                throw ConfigError("unknown key '" + l.key + "'");
            }
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            if (msg.rfind("line ", 0) == 0 || msg.rfind("override ", 0) == 0) throw;
            throw ConfigError(l.where + ": " + msg);
        }
    }

    if (!from_preset) {
        std::string missing;
        for (const char* k : {"grid.dims", "grid.extents", "source.q", "objective.t_ref",
                              "optimizer.volume_fraction"})
            if (!seen.count(k)) missing += std::string(" ") + k;
        if (c.patches.empty()) missing += " patch.<name>.face patch.<name>.kind";
        if (!missing.empty()) throw ConfigError("missing required keys:" + missing);
    }
    for (const auto& [name, given] : patch_keys)
        if (!given.first || !given.second)
            throw ConfigError("patch '" + name + "' needs both face and kind");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        // point at the last line that set a key the message is about
        const std::string msg = e.what();
        const ConfigLine* culprit = nullptr;
        for (const auto& l : lines) {
            bool hit = msg.find(l.key) != std::string::npos;
            if (l.key == "solver.r" || l.key == "solver.strategy") hit |= msg.find("solver.r_") != std::string::npos;
            if (l.key.rfind("material.", 0) == 0) hit |= msg.find("SIMP") != std::string::npos;
            if (l.key.rfind("patch.", 0) == 0) {
                const std::string name = l.key.substr(6, l.key.rfind('.') - 6);
                hit |= msg.find("patch '" + name + "'") != std::string::npos;
            }
            if (hit) culprit = &l;
        }
        if (culprit) throw ConfigError(culprit->where + ": " + msg);
        throw;
    }
    return c;
}

/// Text form that parses back to the identical configuration.
inline std::string render(const RunConfig& c) {
    using detail::format_double;
    std::ostringstream o;
    auto list = [&](const auto& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += " ";
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[i])>>) s += format_double(v[i]);
            else s += std::to_string(v[i]);
        }
        return s;
    };
    o << "grid.dims = " << list(c.dims) << "\n";
    o << "grid.extents = " << list(c.extents) << "\n";
    for (const auto& p : c.patches) {
        o << "patch." << p.name << ".face = " << detail::face_name(p.axis, p.side) << "\n";
        o << "patch." << p.name << ".kind = " << (p.kind == BcKind::Dirichlet ? "dirichlet" : "neumann") << "\n";
        o << "patch." << p.name << ".value = " << format_double(p.value) << "\n";
        if (!p.range.empty()) {
            o << "patch." << p.name << ".range =";
            for (std::size_t i = 0; i < p.range.size(); ++i)
                o << (i ? "," : " ") << format_double(p.range[i].first) << ":" << format_double(p.range[i].second);
            o << "\n";
        }
    }
    o << "source.q = " << format_double(c.source) << "\n";
    o << "material.kappa_min = " << format_double(c.simp.kappa_min) << "\n";
    o << "material.kappa_max = " << format_double(c.simp.kappa_max) << "\n";
    o << "material.penal = " << format_double(c.simp.penal) << "\n";
    o << "filter.length = " << (c.filter_length ? format_double(*c.filter_length) : "rule") << "\n";
    o << "filter.support_cells = " << format_double(c.filter_support_cells) << "\n";
    o << "objective.t_ref = " << format_double(c.t_ref) << "\n";
    o << "optimizer.volume_fraction = " << format_double(c.volume_fraction) << "\n";
    o << "optimizer.move_limit = " << format_double(c.move_limit) << "\n";
    o << "optimizer.max_iterations = " << c.max_iterations << "\n";
    const auto& s = c.solver;
    o << "solver.mode = " << (s.mode == FomMode::OneShot ? "oneshot" : "full") << "\n";
    o << "solver.mor = " << (s.mor_enabled ? "true" : "false") << "\n";
    o << "solver.r_forward = " << s.r_forward << "\n";
    o << "solver.r_adjoint = " << s.r_adjoint << "\n";
    o << "solver.tau_fom = " << format_double(s.tau_fom) << "\n";
    o << "solver.tau_mor = " << format_double(s.tau_mor) << "\n";
    o << "solver.criterion = " << to_string(s.criterion) << "\n";
    o << "solver.max_cg_iterations = " << s.max_cg_iterations << "\n";
    o << "solver.mor_warm_start = " << (s.mor_warm_start ? "true" : "false") << "\n";
    o << "solver.mg_correction_scale = " << format_double(s.mg_correction_scale) << "\n";
    o << "output.dir = " << c.output_dir << "\n";
    o << "output.checkpoint_interval = " << c.checkpoint_interval << "\n";
    return o.str();
}

/// Parses `key=value` override strings given on the command line.
inline std::vector<ConfigLine> parse_overrides(const std::vector<std::string>& items) {
    std::vector<ConfigLine> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto where = "override " + std::to_string(i + 1);
        const auto eq = items[i].find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
        ConfigLine l{detail::trim(items[i].substr(0, eq)), detail::trim(items[i].substr(eq + 1)), where};
        if (l.key.empty() || l.value.empty()) throw ConfigError(where + ": expected key=value");
        out.push_back(std::move(l));
    }
    return out;
}

}  // namespace topomor
