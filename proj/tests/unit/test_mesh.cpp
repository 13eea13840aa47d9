#include "a4test.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace a4test;

namespace {

TriMesh unit_tetrahedron()
{
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, std::sqrt(3.0) / 2, 0),
                  Vec3(0.5, std::sqrt(3.0) / 6, std::sqrt(2.0 / 3.0))};
    m.triangles = {{0, 1, 2}, {0, 1, 3}, {1, 2, 3}, {0, 2, 3}};
    m.colors.assign(4, Vec3(0.8, 0.4, 0.2));
    return m;
}

HexPlaneField zero_field(const GaussianCloud& c)
{
    return HexPlaneField({6, 4, 4, 1, 8, 1, 1e-6}, compute_bounds(c), 1);
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream(p) << s;
}

} // namespace

TEST(MeshToGaussians, UnitTetrahedronHasUnitScales)
{
    const TriMesh m = unit_tetrahedron();
    const GaussianCloud c = mesh_to_gaussians(m);
    ASSERT_EQ(c.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(c.scales[i].x(), 1.0, 1e-12);
        EXPECT_EQ(c.scales[i].x(), c.scales[i].y());
        EXPECT_EQ(c.scales[i].x(), c.scales[i].z());
        EXPECT_EQ(c.opacities[i], 1.0);
        EXPECT_EQ(c.rotations[i], identity_quat());
        EXPECT_EQ(c.positions[i], m.vertices[i]);
        EXPECT_EQ(c.colors[i], m.colors[i]);
    }
}

TEST(MeshToGaussians, CountMatchesVertices)
{
    const TriMesh s = make_uv_sphere(21, 25, 0.55);
    EXPECT_EQ(s.vertices.size(), 502u);
    EXPECT_EQ(mesh_to_gaussians(s).size(), 502u);
}

TEST(MeshToGaussians, ZeroFieldReproducesMeshExactly)
{
    const TriMesh m = make_uv_sphere(6, 8, 0.5);
    const GaussianCloud c = mesh_to_gaussians(m);
    const HexPlaneField f = zero_field(c);
    const std::vector<double> times = {0.0, 0.5, 1.0};
    const auto seq = deform_mesh(m, extract_trajectory(c, f, times));
    ASSERT_EQ(seq.size(), 3u);
    for (const auto& frame : seq) {
        EXPECT_EQ(frame.vertices, m.vertices);
        EXPECT_EQ(frame.triangles, m.triangles);
    }
}

TEST(Trajectory, ConstantTranslationStubShiftsEveryFrame)
{
    const TriMesh m = make_uv_sphere(5, 6, 0.5);
    const GaussianCloud c = mesh_to_gaussians(m);
    HexPlaneField f = zero_field(c);
    auto head = f.head_span(0);
    head[head.size() - 3] = 0.25;
    head[head.size() - 1] = -0.5;
    const std::vector<double> times = uniform_times(5);
    const VertexTrajectory traj = extract_trajectory(c, f, times);
    for (const auto& frame : traj)
        for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(frame[i], c.positions[i] + Vec3(0.25, 0.0, -0.5));
}

TEST(DeformMesh, ExportedPositionsEqualTrajectory)
{
    const TriMesh m = unit_tetrahedron();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    VertexTrajectory traj(3, std::vector<Vec3>(4));
    for (auto& fr : traj)
        for (auto& p : fr) p = Vec3(n(rng), n(rng), n(rng));
    const auto seq = deform_mesh(m, traj);
    for (std::size_t f = 0; f < 3; ++f) {
        EXPECT_EQ(seq[f].vertices, traj[f]);
        EXPECT_EQ(seq[f].triangles, m.triangles);
        EXPECT_EQ(seq[f].colors, m.colors);
    }
    traj[1].pop_back();
    EXPECT_THROW((void)deform_mesh(m, traj), ValidationError);
}

TEST(Export, ReimportMatchesWithinTextPrecision)
{
    TempDir dir("meshseq");
    const TriMesh m = make_uv_sphere(5, 7, 0.6, Vec3(0.1, -0.2, 0.3));
    std::vector<TriMesh> seq = {m, m};
    for (auto& v : seq[1].vertices) v *= 1.1;
    const std::vector<double> times = {0.0, 1.0};
    export_mesh_sequence(seq, times, 24.0, dir.path());
    const json manifest = load_json(dir / "manifest.json");
    EXPECT_EQ(manifest.at("frames").size(), 2u);
    EXPECT_EQ(manifest.at("fps").get<double>(), 24.0);
    for (std::size_t f = 0; f < 2; ++f) {
        const TriMesh back = load_obj(dir / manifest.at("frames")[f].at("file").get<std::string>());
        ASSERT_EQ(back.vertices.size(), seq[f].vertices.size());
        EXPECT_EQ(back.triangles, seq[f].triangles);
        for (std::size_t i = 0; i < back.vertices.size(); ++i) {
            EXPECT_LT((back.vertices[i] - seq[f].vertices[i]).cwiseAbs().maxCoeff(), 1e-7);
            EXPECT_LT((back.colors[i] - seq[f].colors[i]).cwiseAbs().maxCoeff(), 1e-7);
        }
    }
}

TEST(Export, EmptySequenceIsAnError)
{
    TempDir dir("empty");
    EXPECT_THROW(export_mesh_sequence({}, {}, 24.0, dir / "out"), ValidationError);
}

TEST(Obj, ParsesPolygonsSlashesAndNegativeIndices)
{
    TempDir dir("obj");
    write_text(dir / "quad.obj",
               "# quad\n"
               "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0 0.5 0.5 0.5\n"
               "vt 0 0\n"
               "f 1/1/1 2//2 3 4\n"
               "f -4 -3 -1\n");
    const TriMesh m = load_obj(dir / "quad.obj");
    ASSERT_EQ(m.vertices.size(), 4u);
    ASSERT_EQ(m.triangles.size(), 3u);
    EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
    EXPECT_EQ(m.triangles[1], (std::array<int, 3>{0, 2, 3}));
    EXPECT_EQ(m.triangles[2], (std::array<int, 3>{0, 1, 3}));
    EXPECT_EQ(m.colors[0], Vec3::Ones());
    EXPECT_EQ(m.colors[3], Vec3::Constant(0.5));
}

TEST(Obj, ReportsBadInput)
{
    TempDir dir("badobj");
    write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    EXPECT_THROW((void)load_obj(dir / "bad.obj"), ValidationError);
    write_text(dir / "short.obj", "v 0 0\n");
    EXPECT_THROW((void)load_obj(dir / "short.obj"), ValidationError);
    EXPECT_THROW((void)load_obj(dir / "missing.obj"), IoError);
}
