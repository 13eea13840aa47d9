#include "a4test.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace a4test;

namespace {

GaussianCloud single(const Vec3& p, double sigma, double opacity, const Vec3& color = Vec3(0.2, 0.5, 0.9))
{
    GaussianCloud c;
    c.push_back(p, color, opacity, identity_quat(), Vec3::Constant(sigma));
    return c;
}

Camera axis_camera(int size = 32, double focal = 40.0)
{
    return look_at(Vec3(0, 0, -3), Vec3::Zero(), size, size, focal);
}

} // namespace

TEST(Render, NothingInFrustumGivesBlack)
{
    const Camera cam = axis_camera();
    const RenderOutput r = render(single(Vec3(0, 0, -5), 0.2, 1.0), cam);  // behind the camera
    for (double v : r.rgb.data) EXPECT_EQ(v, 0.0);
    for (double v : r.mask.data) EXPECT_EQ(v, 0.0);
    const RenderOutput far = render(single(Vec3(40, 0, 0), 0.2, 1.0), cam);  // off to the side
    for (double v : far.mask.data) EXPECT_EQ(v, 0.0);
}

TEST(Render, SingleIsotropicSplatMatchesClosedForm)
{
    const Camera cam = axis_camera(32, 40.0);
    const double sigma = 0.1, z = 3.0;
    const Vec3 color(0.2, 0.5, 0.9);
    const RenderOutput r = render(single(Vec3::Zero(), sigma, 1.0, color), cam);
    const double s2 = std::pow(cam.fx * sigma / z, 2) + RenderSettings::kDilation;
    const int cx = 16, cy = 16;
    EXPECT_DOUBLE_EQ(cam.cx, 16.0);
    EXPECT_NEAR(r.mask.at(cx, cy, 0), 0.99, 1e-15);
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const double alpha = std::min(0.99, std::exp(-0.5 * (dx * dx + dy * dy) / s2));
            EXPECT_NEAR(r.mask.at(cx + dx, cy + dy, 0), alpha, 1e-12);
            for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.rgb.at(cx + dx, cy + dy, c), color[c] * alpha, 1e-12);
            EXPECT_NEAR(r.mask.at(cx + dx, cy + dy, 0), r.mask.at(cx - dy, cy + dx, 0), 1e-12);  // 90 degree symmetry
        }
}

TEST(Render, FootprintEndsAtThreePointFiveSigma)
{
    const Camera cam = axis_camera(64, 40.0);
    const double sigma = 0.15;
    const RenderOutput r = render(single(Vec3::Zero(), sigma, 0.9), cam);
    const double spx = std::sqrt(std::pow(cam.fx * sigma / 3.0, 2) + RenderSettings::kDilation);
    for (int x = 0; x < 64; ++x) {
        const double d = std::abs(x - 32.0);
        if (d > 3.5 * spx + 1.0) EXPECT_EQ(r.mask.at(x, 32, 0), 0.0) << x;
        if (d < 3.0 * spx) EXPECT_GT(r.mask.at(x, 32, 0), 0.0) << x;
    }
}

TEST(Render, TransparentOccluderIsInvisible)
{
    const Camera cam = axis_camera();
    GaussianCloud both = single(Vec3(0.05, 0.0, 0.5), 0.2, 0.8, Vec3(0.9, 0.1, 0.1));
    both.push_back(Vec3(0.0, 0.0, -0.5), Vec3(0.1, 0.9, 0.1), 0.0, identity_quat(), Vec3::Constant(0.3));
    const RenderOutput a = render(both, cam);
    const RenderOutput b = render(single(Vec3(0.05, 0.0, 0.5), 0.2, 0.8, Vec3(0.9, 0.1, 0.1)), cam);
    EXPECT_TRUE(bitwise_equal(a.rgb, b.rgb));
    EXPECT_TRUE(bitwise_equal(a.mask, b.mask));
}

TEST(Render, FrontSplatOccludesBackSplat)
{
    const Camera cam = axis_camera();
    GaussianCloud c = single(Vec3(0, 0, 0.8), 0.3, 1.0, Vec3(0, 0, 1));
    c.push_back(Vec3(0, 0, -0.8), Vec3(1, 0, 0), 1.0, identity_quat(), Vec3::Constant(0.3));
    const RenderOutput r = render(c, cam);
    EXPECT_GT(r.rgb.at(16, 16, 0), 0.98);
    EXPECT_LT(r.rgb.at(16, 16, 2), 0.01);
    for (double v : r.mask.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Render, InputOrderDoesNotMatter)
{
    const GaussianCloud c = random_cloud(40, 12);
    GaussianCloud p;
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) p.push_back(c.positions[i], c.colors[i], c.opacities[i], c.rotations[i], c.scales[i]);
    const Camera cam = test_camera(40);
    const RenderOutput a = render(c, cam), b = render(p, cam);
    for (std::size_t i = 0; i < a.rgb.data.size(); ++i) EXPECT_NEAR(a.rgb.data[i], b.rgb.data[i], 1e-12);
}

TEST(Render, RigidMotionOfSceneAndCameraLeavesImageUnchanged)
{
    const GaussianCloud c = random_cloud(25, 13);
    const Camera cam = test_camera(32);
    const Mat3 r = quat_to_matrix(axis_angle_quat(Vec3(1, 2, 3).normalized(), 0.7));
    const Vec3 t(0.3, -1.0, 2.0);
    GaussianCloud moved = c;
    const Quat qr = axis_angle_quat(Vec3(1, 2, 3).normalized(), 0.7);
    for (std::size_t i = 0; i < c.size(); ++i) {
        moved.positions[i] = r * c.positions[i] + t;
        moved.rotations[i] = quat_multiply(qr, c.rotations[i]);
    }
    Camera cam2 = cam;
    cam2.rotation = cam.rotation * r.transpose();
    cam2.translation = cam.translation - cam2.rotation * t;
    const RenderOutput a = render(c, cam), b = render(moved, cam2);
    for (std::size_t i = 0; i < a.rgb.data.size(); ++i) EXPECT_NEAR(a.rgb.data[i], b.rgb.data[i], 1e-9);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients)
{
    const GaussianCloud c = random_cloud(10, 2);
    const Camera cam = test_camera(24);
    const RenderOutput r = render(c, cam);
    const auto g = render_backward(c, cam, r, Image(24, 24, 3), Image(24, 24, 1));
    for (double v : pack_grads(g)) EXPECT_EQ(v, 0.0);
}

TEST(RenderBackward, SingleGaussianMatchesFiniteDifferences)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_LT(renderer_fd_error(1, seed), 1e-3) << seed;
}

TEST(RenderBackward, FewGaussiansMatchFiniteDifferences)
{
    EXPECT_LT(renderer_fd_error(4, 7), 1e-3);
}

TEST(RenderBackward, FiftyGaussianDirectionalDerivative)
{
    EXPECT_LT(renderer_directional_error(50, 21), 1e-2);
}

TEST(RenderBackward, RejectsMismatchedState)
{
    const GaussianCloud c = random_cloud(3, 2);
    const Camera cam = test_camera(16);
    const RenderOutput r = render(c, cam);
    EXPECT_THROW((void)render_backward(random_cloud(4, 2), cam, r, Image(16, 16, 3), Image(16, 16, 1)),
                 ValidationError);
    EXPECT_THROW((void)render_backward(c, cam, r, Image(8, 8, 3), Image(16, 16, 1)), ValidationError);
}

TEST(Render, ThreadCountDoesNotChangePixels)
{
    const GaussianCloud c = random_cloud(60, 5);
    const Camera cam = test_camera(48);
    set_thread_count(1);
    const RenderOutput a = render(c, cam);
    set_thread_count(3);
    const RenderOutput b = render(c, cam);
    set_thread_count(0);
    EXPECT_TRUE(bitwise_equal(a.rgb, b.rgb));
    EXPECT_TRUE(bitwise_equal(a.mask, b.mask));
}
