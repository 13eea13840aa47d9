#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/quaternion.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/hexplane/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace animate4d {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> colors;
};

inline void validate(const TriMesh& m)
{
    if (m.vertices.empty()) throw ValidationError("mesh has no vertices");
    if (m.colors.size() != m.vertices.size()) throw ValidationError("mesh needs one color per vertex");
    const int n = static_cast<int>(m.vertices.size());
    for (const auto& t : m.triangles)
        for (int i : t)
            if (i < 0 || i >= n) throw ValidationError("triangle index " + std::to_string(i) + " out of range");
    for (const auto& v : m.vertices)
        if (!v.allFinite()) throw ValidationError("mesh vertex has a non-finite coordinate");
}

/// Per-vertex positions indexed [frame][vertex].
using VertexTrajectory = std::vector<std::vector<Vec3>>;

inline double triangle_area(const TriMesh& m, const std::array<int, 3>& t)
{
    const Vec3& a = m.vertices[t[0]];
    return 0.5 * (m.vertices[t[1]] - a).cross(m.vertices[t[2]] - a).norm();
}

/// Reads `v x y z [r g b]` and `f a b c ...` lines (1-based, `a/b/c` forms accepted,
/// negative indices relative). Polygons are fan-triangulated; zero-area triangles dropped.
inline TriMesh load_obj(const fs::path& path)
{
    std::istringstream in(detail::read_file(path));
    TriMesh m;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            std::vector<double> vals;
            double x;
            while (ls >> x) vals.push_back(x);
            if (vals.size() != 3 && vals.size() != 6)
                throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": vertex needs 3 or 6 numbers");
            m.vertices.emplace_back(vals[0], vals[1], vals[2]);
            m.colors.push_back(vals.size() == 6 ? Vec3(vals[3], vals[4], vals[5]) : Vec3::Ones());
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                int i = 0;
                try {
                    i = std::stoi(tok.substr(0, tok.find('/')));
                } catch (const std::exception&) {
                    throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad face index '" + tok +
                                          "'");
                }
                idx.push_back(i > 0 ? i - 1 : static_cast<int>(m.vertices.size()) + i);
            }
            if (idx.size() < 3)
                throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": face needs 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    validate(m);
    std::erase_if(m.triangles, [&](const auto& t) { return triangle_area(m, t) <= 0.0; });
    return m;
}

inline void save_obj(const TriMesh& m, const fs::path& path)
{
    auto out = detail::open_for_write(path);
    char buf[160];
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        const auto& v = m.vertices[i];
        const auto& c = m.colors[i];
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g %.9g %.9g %.9g\n", v.x(), v.y(), v.z(), c.x(), c.y(), c.z());
        out << buf;
    }
    for (const auto& t : m.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

/// One Gaussian per vertex: identity rotation, opacity 1, isotropic scale equal to the mean
/// length of incident edges (global mean edge length for isolated vertices).
inline GaussianCloud mesh_to_gaussians(const TriMesh& mesh)
{
    validate(mesh);
    const std::size_t n = mesh.vertices.size();
    std::vector<double> sum(n, 0.0);
    std::vector<int> count(n, 0);
    double total = 0.0;
    int edges = 0;
    // Each undirected edge counted once even when shared by two triangles.
    std::vector<std::vector<int>> seen(n);
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            if (std::find(seen[a].begin(), seen[a].end(), b) != seen[a].end()) continue;
            seen[a].push_back(b);
            const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
            sum[a] += len;
            sum[b] += len;
            ++count[a];
            ++count[b];
            total += len;
            ++edges;
        }
    const double global = edges > 0 ? total / edges : 1.0;
    GaussianCloud cloud;
    cloud.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = count[i] > 0 ? sum[i] / count[i] : global;
        cloud.positions[i] = mesh.vertices[i];
        cloud.colors[i] = mesh.colors[i];
        cloud.opacities[i] = 1.0;
        cloud.rotations[i] = identity_quat();
        cloud.scales[i] = Vec3::Constant(s);
    }
    return cloud;
}

inline VertexTrajectory extract_trajectory(const GaussianCloud& cloud, const HexPlaneField& field,
                                           std::span<const double> times)
{
    detail::require(!times.empty(), "extract_trajectory needs at least one timestamp");
    const DeformTape tape = deform_batch(cloud, field, times);
    VertexTrajectory traj;
    for (const auto& f : tape.frames) traj.push_back(f.cloud.positions);
    return traj;
}

inline std::vector<TriMesh> deform_mesh(const TriMesh& mesh, const VertexTrajectory& traj)
{
    std::vector<TriMesh> seq;
    for (std::size_t f = 0; f < traj.size(); ++f) {
        if (traj[f].size() != mesh.vertices.size())
            throw ValidationError("trajectory frame " + std::to_string(f) + " has " + std::to_string(traj[f].size()) +
                                  " vertices, mesh has " + std::to_string(mesh.vertices.size()));
        TriMesh m = mesh;
        m.vertices = traj[f];
        seq.push_back(std::move(m));
    }
    return seq;
}

/// Writes frame_0000.obj ... and manifest.json {fps, frames:[{file, time}]}.
inline void export_mesh_sequence(const std::vector<TriMesh>& seq, std::span<const double> times, double fps,
                                 const fs::path& dir)
{
    if (seq.empty()) throw ValidationError("cannot export an empty mesh sequence");
    if (times.size() != seq.size()) throw ValidationError("mesh sequence and timestamps differ in length");
    fs::create_directories(dir);
    json frames = json::array();
    for (std::size_t f = 0; f < seq.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.obj", f);
        save_obj(seq[f], dir / name);
        frames.push_back({{"file", name}, {"time", times[f]}});
    }
    save_json({{"fps", fps}, {"frames", frames}}, dir / "manifest.json");
}

/// Vertex-colored mesh with a roughly uniform vertex density: a UV sphere.
inline TriMesh make_uv_sphere(int rings, int segments, double radius, const Vec3& center = Vec3::Zero())
{
    detail::require(rings >= 2 && segments >= 3, "sphere needs rings >= 2 and segments >= 3");
    TriMesh m;
    const double pi = std::acos(-1.0);
    auto color_of = [&](const Vec3& p) {
        const Vec3 d = (p - center) / radius;
        return Vec3(0.5 + 0.4 * d.x(), 0.5 + 0.4 * d.y(), 0.5 + 0.4 * d.z());
    };
    m.vertices.push_back(center + Vec3(0, radius, 0));
    for (int r = 1; r < rings; ++r) {
        const double th = pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double ph = 2.0 * pi * s / segments;
            m.vertices.push_back(center + radius * Vec3(std::sin(th) * std::cos(ph), std::cos(th),
                                                        std::sin(th) * std::sin(ph)));
        }
    }
    m.vertices.push_back(center - Vec3(0, radius, 0));
    for (const auto& v : m.vertices) m.colors.push_back(color_of(v));
    const int bottom = static_cast<int>(m.vertices.size()) - 1;
    auto ring = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
    for (int s = 0; s < segments; ++s) m.triangles.push_back({0, ring(1, s + 1), ring(1, s)});
    for (int r = 1; r + 1 < rings; ++r)
        for (int s = 0; s < segments; ++s) {
            m.triangles.push_back({ring(r, s), ring(r, s + 1), ring(r + 1, s)});
            m.triangles.push_back({ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s)});
        }
    for (int s = 0; s < segments; ++s) m.triangles.push_back({bottom, ring(rings - 1, s), ring(rings - 1, s + 1)});
    return m;
}

} // namespace animate4d
