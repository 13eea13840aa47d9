#include "a4test.hpp"

#include <gtest/gtest.h>

using namespace a4test;

namespace {

/// Returns the noise it was queried with.
class PerfectPredictor : public NoisePredictor {
public:
    LatentVideo predict(const NoiseQuery& q) override { return q.sampled_noise; }
};

class ZeroPredictor : public NoisePredictor {
public:
    LatentVideo predict(const NoiseQuery& q) override
    {
        const auto& n = q.noisy;
        return LatentVideo(n.batch(), n.views(), n.frames(), n.height(), n.width(), n.channels());
    }
};

Image filled(int w, int h, int c, double v)
{
    Image img(w, h, c);
    std::fill(img.data.begin(), img.data.end(), v);
    return img;
}

LatentVideo random_latent(int views, int frames, int size, int channels, std::mt19937_64& rng)
{
    LatentVideo z(1, views, frames, size, size, channels);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : z.data()) v = n(rng);
    return z;
}

} // namespace

TEST(Recon, IdenticalImagesGiveZero)
{
    std::mt19937_64 rng(1);
    const Image rgb = random_image(5, 4, 3, rng), mask = random_image(5, 4, 1, rng);
    const ReconTerm t = recon_loss(rgb, mask, rgb, mask);
    EXPECT_EQ(t.loss, 0.0);
    for (double g : t.grad_rgb.data) EXPECT_EQ(g, 0.0);
}

TEST(Recon, OnePixelHandComputation)
{
    const ReconTerm t = recon_loss(filled(1, 1, 3, 0.5), filled(1, 1, 1, 0.3), filled(1, 1, 3, 0.0), filled(1, 1, 1, 0.3));
    EXPECT_DOUBLE_EQ(t.loss, 0.75);
    EXPECT_DOUBLE_EQ(t.grad_rgb.data[0], 1.0);
}

TEST(Recon, SumNotMean)
{
    const double a = recon_loss(filled(2, 2, 3, 0.4), filled(2, 2, 1, 0), filled(2, 2, 3, 0.1), filled(2, 2, 1, 0)).loss;
    const double b = recon_loss(filled(4, 2, 3, 0.4), filled(4, 2, 1, 0), filled(4, 2, 3, 0.1), filled(4, 2, 1, 0)).loss;
    EXPECT_NEAR(b, 2.0 * a, 1e-15);
    EXPECT_THROW((void)recon_loss(filled(2, 2, 3, 0), filled(2, 2, 1, 0), filled(3, 2, 3, 0), filled(2, 2, 1, 0)),
                 ValidationError);
}

TEST(Recon, MaskTermCountsToo)
{
    const double l = recon_loss(filled(1, 1, 3, 0.2), filled(1, 1, 1, 1.0), filled(1, 1, 3, 0.2), filled(1, 1, 1, 0.5)).loss;
    EXPECT_DOUBLE_EQ(l, 0.25);
}

TEST(NeighborGraph, TwoPointsWeightIsInverseE)
{
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(0.7, 0, 0)};
    const NeighborGraph g = build_neighbor_graph(pts, 1.0);
    ASSERT_EQ(g.neighbors[0], std::vector<int>{1});
    ASSERT_EQ(g.neighbors[1], std::vector<int>{0});
    EXPECT_DOUBLE_EQ(g.mean_distance, 0.7);
    EXPECT_NEAR(g.weights[0][0], std::exp(-1.0), 1e-15);
    EXPECT_NEAR(g.weights[0][0], 0.3679, 1e-4);
}

TEST(NeighborGraph, SmallRadiusGivesEmptyLists)
{
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const NeighborGraph g = build_neighbor_graph(pts, 0.5);
    for (const auto& l : g.neighbors) EXPECT_TRUE(l.empty());
    EXPECT_EQ(g.edge_count(), 0u);
}

TEST(NeighborGraph, CollinearChain)
{
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    const NeighborGraph g = build_neighbor_graph(pts, 1.5);
    EXPECT_EQ(g.neighbors[0].size(), 1u);
    EXPECT_EQ(g.neighbors[1].size(), 2u);
    EXPECT_EQ(g.neighbors[2].size(), 1u);
    EXPECT_THROW((void)build_neighbor_graph(pts, 0.0), ValidationError);
}

TEST(NeighborGraph, DefaultRadiusIsFourMedianSpacings)
{
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(5, 0, 0)};
    EXPECT_DOUBLE_EQ(default_neighbor_radius(pts), 4.0);
}

TEST(Rotation, IdentityForUnchangedEdges)
{
    const std::vector<Vec3> e = {Vec3(1, 0.2, 0), Vec3(0, 1, 0.3), Vec3(0.1, 0, 1)};
    const std::vector<double> w = {1, 1, 1};
    EXPECT_TRUE(estimate_rotation(e, e, w).isApprox(Mat3::Identity(), 1e-14));
}

TEST(Rotation, RecoversQuarterTurn)
{
    const std::vector<Vec3> rest = {Vec3(1, 0.2, -0.3), Vec3(-0.4, 1, 0.3), Vec3(0.1, 0.5, 1)};
    const Mat3 rz = quat_to_matrix(axis_angle_quat(Vec3::UnitZ(), std::numbers::pi / 2));
    std::vector<Vec3> cur;
    for (const auto& e : rest) cur.push_back(rz * e);
    const std::vector<double> w = {0.5, 1.0, 0.8};
    EXPECT_LT((estimate_rotation(rest, cur, w) - rz).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Rotation, SingleEdgeAlignsDirection)
{
    const std::vector<Vec3> rest = {Vec3(1, 0, 0)}, cur = {Vec3(0.3, 2.0, -1.0)};
    const std::vector<double> w = {1.0};
    const Mat3 r = estimate_rotation(rest, cur, w);
    EXPECT_TRUE((r * rest[0]).isApprox(cur[0].normalized(), 1e-12));
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    const std::vector<Vec3> flipped = {Vec3(-1, 0, 0)};
    EXPECT_TRUE((estimate_rotation(rest, flipped, w) * rest[0]).isApprox(flipped[0], 1e-12));
}

TEST(Arap, GlobalRigidMotionHasNoEnergy)
{
    std::mt19937_64 rng(4);
    const GaussianCloud c = random_cloud(60, 4);
    std::vector<std::vector<Vec3>> frames = {c.positions};
    for (int f = 1; f < 5; ++f) {
        const Mat3 r = quat_to_matrix(random_unit_quat(rng));
        const Vec3 t(0.1 * f, -0.2 * f, 0.05);
        std::vector<Vec3> moved;
        for (const auto& p : c.positions) moved.push_back(r * p + t);
        frames.push_back(std::move(moved));
    }
    const NeighborGraph g = build_neighbor_graph(c.positions, default_neighbor_radius(c.positions));
    EXPECT_GT(g.edge_count(), 0u);
    EXPECT_LE(arap_loss(frames, g).loss, 1e-8);
}

TEST(Arap, PureTranslationIsZeroToRoundoff)
{
    // Dyadic coordinates so that (p + t) - (q + t) == p - q in floating point.
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> u(-32, 32);
    std::vector<Vec3> rest(30);
    for (auto& p : rest) p = Vec3(u(rng), u(rng), u(rng)) / 64.0;
    std::vector<std::vector<Vec3>> frames = {rest, rest};
    for (auto& p : frames[1]) p += Vec3(0.5, 0.25, -0.125);
    const NeighborGraph g = build_neighbor_graph(rest, 0.5);
    EXPECT_LE(arap_loss(frames, g).loss, 1e-24);
}

TEST(Arap, ThreePointBruteForceOracle)
{
    const std::vector<Vec3> rest = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.3, 0.8, 0.1)};
    std::vector<Vec3> displaced = rest;
    displaced[2] += Vec3(0.1, 0.0, 0.0);
    const std::vector<std::vector<Vec3>> frames = {rest, rest, displaced};
    const double radius = 2.0;
    const ArapResult res = arap_loss(frames, build_neighbor_graph(rest, radius));
    const double oracle = arap_brute_force(frames, radius);
    EXPECT_GT(oracle, 0.0);
    EXPECT_NEAR(res.loss, oracle, 1e-12);
}

TEST(Arap, GradientMatchesFiniteDifferences)
{
    for (std::uint64_t seed : {1u, 2u}) EXPECT_LT(arap_fd_error(seed), 1e-6);
}

TEST(Arap, EdgeLengthVarianceIsZeroForRigidMotion)
{
    const GaussianCloud c = random_cloud(20, 6);
    const NeighborGraph g = build_neighbor_graph(c.positions, 0.6);
    std::vector<std::vector<Vec3>> frames = {c.positions, c.positions};
    const Mat3 r = quat_to_matrix(axis_angle_quat(Vec3::UnitY(), 0.4));
    for (auto& p : frames[1]) p = r * p;
    EXPECT_LT(edge_length_variance(frames, g), 1e-14);
    frames[1][0] *= 1.5;
    EXPECT_GT(edge_length_variance(frames, g), 1e-6);
}

TEST(Sds, PerfectDenoiserGivesExactlyZero)
{
    std::mt19937_64 rng(8);
    PerfectPredictor perfect;
    const NoiseSchedule s = NoiseSchedule::linear();
    for (int k = 0; k < 20; ++k) {
        const LatentVideo z = random_latent(2, 3, 2, 4, rng);
        const int t = std::uniform_int_distribution<int>(0, 999)(rng);
        const SdsResult r = sds_loss(z, perfect, t, s, rng);
        EXPECT_EQ(r.loss, 0.0);
        for (double g : r.grad.data()) EXPECT_EQ(g, 0.0);
        EXPECT_EQ(r.z0_estimate.data(), z.frame_slice(1, 2).data());
    }
}

TEST(Sds, ZeroDenoiserClosedForm)
{
    std::mt19937_64 rng(9);
    ZeroPredictor zero;
    const NoiseSchedule s = NoiseSchedule::linear();
    const LatentVideo z = random_latent(1, 3, 2, 4, rng);
    const LatentVideo noise = LatentVideo::gaussian_like(z.frame_slice(1, 2), rng);
    const int t = 500;
    const SdsResult r = sds_loss(z, zero, t, s, noise);
    const double ratio = s.noise(t) / s.signal(t);
    double norm2 = 0.0;
    for (double v : noise.data()) norm2 += v * v;
    EXPECT_NEAR(r.loss, ratio * ratio * norm2, 1e-12 * r.loss);
    const LatentVideo tail = z.frame_slice(1, 2);
    for (std::size_t i = 0; i < tail.size(); ++i)
        EXPECT_NEAR(r.z0_estimate.data()[i], tail.data()[i] + ratio * noise.data()[i], 1e-12);
}

TEST(Sds, FrameZeroReceivesNoGradient)
{
    std::mt19937_64 rng(10);
    ZeroPredictor zero;
    const LatentVideo z = random_latent(2, 3, 2, 4, rng);
    const SdsResult r = sds_loss(z, zero, 100, NoiseSchedule::linear(), rng);
    const LatentVideo g0 = r.grad.frame_slice(0, 1);
    for (double g : g0.data()) EXPECT_EQ(g, 0.0);
}

TEST(Sds, GradientMatchesFiniteDifferencesOnTwoByTwoLatent)
{
    EXPECT_LT(sds_fd_error(3), 1e-6);
}

TEST(Sds, GradientThroughDecodeAndRendererMatchesFiniteDifferences)
{
    EXPECT_LT(sds_render_chain_fd_error(4), 1e-3);
}

TEST(Sds, TimestepSamplingStaysInRange)
{
    std::mt19937_64 rng(1);
    const NoiseSchedule s = NoiseSchedule::linear();
    int lo = 1000, hi = -1;
    for (int k = 0; k < 5000; ++k) {
        const int t = sample_sds_timestep(s, 0.02, 0.6, rng);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    EXPECT_EQ(lo, 19);
    EXPECT_EQ(hi, 599);
}

TEST(TotalLoss, PaperWeights)
{
    const LossWeights w;
    EXPECT_DOUBLE_EQ(w.rec, 100.0);
    EXPECT_DOUBLE_EQ(w.sds, 0.01);
    EXPECT_DOUBLE_EQ(w.arap, 10.0);
    EXPECT_DOUBLE_EQ(total_loss(1, 1, 1, w), 110.01);
    EXPECT_EQ(total_loss(0, 0, 0, w), 0.0);
    EXPECT_DOUBLE_EQ(total_loss(2, 1e6, 3, LossWeights{100.0, 0.0, 10.0}), 230.0);
    EXPECT_THROW((void)total_loss(std::nan(""), 0, 0, w), NumericError);
    EXPECT_THROW(validate(LossWeights{-1, 0, 0}), ValidationError);
}
