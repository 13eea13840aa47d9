#include "a4test.hpp"

#include <gtest/gtest.h>

using namespace a4test;

namespace {

SceneBounds unit_bounds() { return SceneBounds{-Vec3::Ones(), Vec3::Ones()}; }

HexPlaneConfig small_config() { return {5, 4, 3, 2, 8, 1, 1e-6}; }

void fill_random(std::span<double> v, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : v) x = u(rng);
}

} // namespace

TEST(HexPlane, ConstantOnePlanesGiveOnes)
{
    HexPlaneField f(small_config(), unit_bounds(), 1);
    std::fill(f.plane_values().begin(), f.plane_values().end(), 1.0);
    for (double t : {0.0, 0.37, 1.0}) {
        const auto feat = f.interpolate_feature(Vec3(0.3, -0.8, 0.51), t);
        EXPECT_EQ(feat.size(), 6);
        EXPECT_TRUE(feat.isOnes(0.0));
    }
}

TEST(HexPlane, NodeQueryIsProductOfStoredVectors)
{
    const HexPlaneConfig cfg = small_config();
    HexPlaneField f(cfg, unit_bounds(), 1);
    fill_random(f.plane_values(), 9, 0.5, 1.5);
    const int c = cfg.feature_dim;
    // Scale l has 5 << l nodes per spatial axis over [-1, 1] and 4 temporal nodes over [0, 1].
    const std::array<int, 3> k = {1, 3, 2};
    const int tk = 2;
    for (int l = 0; l < cfg.num_scales; ++l) {
        const double step = 2.0 / ((cfg.spatial_res << l) - 1);
        const std::array<int, 4> node = {k[0] << l, k[1] << l, k[2] << l, tk};
        const Vec3 pos(-1 + node[0] * step, -1 + node[1] * step, -1 + node[2] * step);
        const auto feat = f.interpolate_feature(pos, tk / 3.0);
        Eigen::VectorXd expect = Eigen::VectorXd::Ones(c);
        for (int p = 0; p < 6; ++p) {
            const auto shape = f.plane_shape(l, p);
            const int a = node[kPlaneAxes[p][0]], b = node[kPlaneAxes[p][1]];
            const std::size_t off = f.plane_offset(l, p) + (static_cast<std::size_t>(a) * shape[1] + b) * c;
            for (int ch = 0; ch < c; ++ch) expect[ch] *= f.plane_values()[off + ch];
        }
        EXPECT_LT((feat.segment(l * c, c) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(HexPlane, OneZeroPlaneZeroesEverything)
{
    const HexPlaneConfig cfg{5, 4, 3, 1, 8, 1, 1e-6};
    HexPlaneField f(cfg, unit_bounds(), 1);
    const auto shape = f.plane_shape(0, 4);
    std::fill_n(f.plane_values().begin() + static_cast<std::ptrdiff_t>(f.plane_offset(0, 4)),
                shape[0] * shape[1] * cfg.feature_dim, 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int k = 0; k < 20; ++k)
        EXPECT_TRUE(f.interpolate_feature(Vec3(u(rng), u(rng), u(rng)), std::abs(u(rng)) / 1.2).isZero(0.0));
}

TEST(HexPlane, InterpolationIsContinuousAcrossCells)
{
    HexPlaneField f(small_config(), unit_bounds(), 4);
    fill_random(f.plane_values(), 4);
    const double edge = -1 + 2.0 / 4.0;  // cell boundary on the finer scale
    for (double eps : {1e-9, 1e-12}) {
        const auto lo = f.interpolate_feature(Vec3(edge - eps, 0.1, 0.2), 0.5);
        const auto hi = f.interpolate_feature(Vec3(edge + eps, 0.1, 0.2), 0.5);
        EXPECT_LT((lo - hi).cwiseAbs().maxCoeff(), 1e3 * eps);
    }
}

TEST(HexPlane, QueriesOutsideBoundsClampToTheBoundary)
{
    HexPlaneField f(small_config(), unit_bounds(), 4);
    fill_random(f.plane_values(), 5);
    EXPECT_EQ(f.interpolate_feature(Vec3(3.0, 0.2, -7.0), 1.5), f.interpolate_feature(Vec3(1.0, 0.2, -1.0), 1.0));
}

TEST(HexPlane, ZeroInitHeadsGiveZeroOffsets)
{
    HexPlaneField f(HexPlaneConfig::desk(), unit_bounds(), 2);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        const auto d = f.predict_offsets(Vec3(u(rng), u(rng), u(rng)), 0.5 * (u(rng) + 1));
        EXPECT_TRUE(d.position.isZero(0.0));
        EXPECT_TRUE(d.rotation.isZero(0.0));
        EXPECT_TRUE(d.scale.isZero(0.0));
    }
}

TEST(HexPlane, IdentitySlicingStubsExposeFeatures)
{
    const HexPlaneConfig cfg{5, 4, 10, 1, 1, 0, 1e-6};
    HexPlaneField f(cfg, unit_bounds(), 6);
    fill_random(f.plane_values(), 6, 0.5, 1.5);
    std::fill(f.head_values().begin(), f.head_values().end(), 0.0);
    const std::array<int, 3> outs = {3, 4, 3}, first = {0, 3, 7};
    for (int h = 0; h < 3; ++h) {
        auto w = f.head_span(h);
        for (int o = 0; o < outs[h]; ++o) w[static_cast<std::size_t>(o) * 10 + first[h] + o] = 1.0;
    }
    const Vec3 p(0.2, -0.3, 0.7);
    const auto feat = f.interpolate_feature(p, 0.4);
    const auto d = f.predict_offsets(p, 0.4);
    EXPECT_EQ(d.position, feat.segment(0, 3));
    EXPECT_EQ(d.rotation, feat.segment(3, 4));
    EXPECT_EQ(d.scale, feat.segment(7, 3));
}

TEST(HexPlane, GradientsMatchFiniteDifferences)
{
    for (std::uint64_t seed : {1u, 2u}) EXPECT_LT(hexplane_fd_error(seed), 1e-4);
}

TEST(HexPlane, PositionOffsetGradientWrtPlanesMatchesFiniteDifferences)
{
    HexPlaneField f(small_config(), unit_bounds(), 8);
    fill_random(f.plane_values(), 8, 0.5, 1.5);
    fill_random(f.head_values(), 9, -0.5, 0.5);
    GaussianCloud cloud;
    cloud.push_back(Vec3(0.1, 0.2, -0.3), Vec3::Zero(), 1.0, identity_quat(), Vec3::Constant(0.1));
    const double t[1] = {0.6};
    DeformedGrads g(1);
    g.positions[0] = Vec3(1.0, 0.0, 0.0);
    std::vector<double> gp(f.plane_values().size(), 0.0), gh(f.head_values().size(), 0.0);
    deform_backward(cloud, f, deform_batch(cloud, f, t), g, gp, gh);
    const auto numeric = central_diff(f.plane_values(), [&] { return f.predict_offsets(cloud.positions[0], 0.6).position.x(); }, 1e-6);
    EXPECT_LT(rel_error(gp, numeric), 1e-4);
}

TEST(Deform, ZeroOffsetsReproduceTheStaticCloud)
{
    GaussianCloud cloud = random_cloud(30, 3);
    HexPlaneField f(HexPlaneConfig::desk(), compute_bounds(cloud), 3);
    for (double t : {0.0, 0.5, 1.0}) {
        const DeformedCloud d = deform(cloud, f, t);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            EXPECT_EQ(d.cloud.positions[i], cloud.positions[i]);
            EXPECT_EQ(d.cloud.rotations[i], cloud.rotations[i]);
            EXPECT_EQ(d.cloud.scales[i], cloud.scales[i]);
            EXPECT_EQ(d.cloud.colors[i], cloud.colors[i]);
            EXPECT_EQ(d.cloud.opacities[i], cloud.opacities[i]);
        }
    }
}

TEST(Deform, ConstantTranslationStubShiftsEveryPosition)
{
    GaussianCloud cloud = random_cloud(12, 4);
    const HexPlaneConfig cfg{6, 4, 2, 1, 4, 1, 1e-6};
    HexPlaneField f(cfg, compute_bounds(cloud), 4);
    // Last layer of the position head: 3 x hidden weights (zero) then a 3-entry bias.
    auto head = f.head_span(0);
    head[head.size() - 3] = 0.1;
    const DeformedCloud d = deform(cloud, f, 0.7);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_EQ(d.cloud.positions[i], cloud.positions[i] + Vec3(0.1, 0.0, 0.0));
        EXPECT_EQ(d.cloud.rotations[i], cloud.rotations[i]);
    }
}

TEST(Deform, ScalesAreFlooredAndRotationsRenormalized)
{
    GaussianCloud cloud = random_cloud(5, 4);
    const HexPlaneConfig cfg{6, 4, 2, 1, 4, 1, 1e-4};
    HexPlaneField f(cfg, compute_bounds(cloud), 4);
    auto scale_head = f.head_span(2);
    for (int a = 0; a < 3; ++a) scale_head[scale_head.size() - 3 + a] = -10.0;
    auto rot_head = f.head_span(1);
    rot_head[rot_head.size() - 4] = 0.5;
    const DeformedCloud d = deform(cloud, f, 0.2);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_TRUE(d.cloud.scales[i].isApprox(Vec3::Constant(1e-4)));
        EXPECT_NEAR(d.cloud.rotations[i].norm(), 1.0, 1e-14);
    }
    EXPECT_NO_THROW(validate(d.cloud));
}

TEST(Parameters, CountGroupsAndAliasing)
{
    const HexPlaneConfig cfg = small_config();
    HexPlaneField f(cfg, unit_bounds(), 1);
    std::size_t grid = 0;
    for (int l = 0; l < cfg.num_scales; ++l) {
        const int s = cfg.spatial_res << l, t = cfg.temporal_res;
        grid += static_cast<std::size_t>(3 * s * s + 3 * s * t) * cfg.feature_dim;
    }
    const int w = cfg.num_scales * cfg.feature_dim, h = cfg.hidden_width;
    std::size_t heads = 0;
    for (int out : {3, 4, 3}) heads += static_cast<std::size_t>(w * h + h + h * out + out);
    EXPECT_EQ(f.parameter_count(), grid + heads);

    auto groups = f.parameters();
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0].values.size(), grid);
    EXPECT_EQ(groups[1].values.size(), heads);
    const double* a0 = groups[0].values.data();
    const double* b0 = groups[1].values.data();
    EXPECT_TRUE(a0 + grid <= b0 || b0 + heads <= a0);

    const Vec3 p(0.1, 0.2, 0.3);
    const auto before = f.interpolate_feature(p, 0.5);
    for (auto& v : groups[0].values) v *= 2.0;
    EXPECT_TRUE(f.interpolate_feature(p, 0.5).isApprox(before * 64.0, 1e-12));
    groups[1].values[groups[1].values.size() - 1] = 0.25;  // scale-head bias z
    EXPECT_DOUBLE_EQ(f.predict_offsets(p, 0.5).scale.z(), 0.25);
}

TEST(Checkpoint, RoundTripPreservesLayoutAndValues)
{
    TempDir dir("hex");
    HexPlaneField f(small_config(), SceneBounds{Vec3(-0.5, -1, -2), Vec3(0.5, 1, 2)}, 1);
    fill_random(f.head_values(), 3);
    save_field(f, dir / "f.a4df");
    const HexPlaneField g = load_field(dir / "f.a4df");
    EXPECT_EQ(g.parameter_count(), f.parameter_count());
    EXPECT_EQ(g.bounds().min, f.bounds().min);
    for (std::size_t i = 0; i < f.head_values().size(); ++i)
        EXPECT_EQ(g.head_values()[i], static_cast<double>(static_cast<float>(f.head_values()[i])));
    EXPECT_THROW((void)load_field(dir / "missing.a4df"), std::exception);
}
