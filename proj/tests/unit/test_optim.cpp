#include "a4test.hpp"

#include <gtest/gtest.h>

using namespace a4test;

namespace {

class PerfectPredictor : public NoisePredictor {
public:
    LatentVideo predict(const NoiseQuery& q) override { return q.sampled_noise; }
};

SyntheticScene small_scene(double amplitude, int frames = 4, int views = 2, int res = 24, std::size_t count = 30)
{
    SyntheticMotionSpec spec;
    spec.amplitude = amplitude;
    spec.frames = frames;
    spec.views = views;
    spec.orbit.resolution = res;
    return synthesize(make_blob_cloud(count, 3), spec);
}

TrainConfig small_config(int recon, int sds = 0)
{
    TrainConfig c;
    c.recon_iters = recon;
    c.sds_iters = sds;
    c.seed = 11;
    return c;
}

HexPlaneField small_field(const GaussianCloud& cloud)
{
    return HexPlaneField({6, 4, 4, 1, 8, 1, 1e-6}, compute_bounds(cloud), 5);
}

std::vector<double> snapshot(HexPlaneField& f)
{
    std::vector<double> v(f.plane_values().begin(), f.plane_values().end());
    v.insert(v.end(), f.head_values().begin(), f.head_values().end());
    return v;
}

} // namespace

TEST(Adam, ZeroGradientsLeaveParametersUnchanged)
{
    std::vector<double> a = {0.3, -1.2, 4.0}, b = {7.0};
    const std::vector<double> a0 = a, b0 = b;
    const std::vector<ParamGroup> params = {{"a", a}, {"b", b}};
    AdamState s = AdamState::like(params);
    const GradBuffers g = GradBuffers::like(params);
    const double lrs[2] = {0.01, 1e-4};
    for (int k = 0; k < 5; ++k) adam_step(params, g, s, lrs);
    EXPECT_EQ(a, a0);
    EXPECT_EQ(b, b0);
    EXPECT_EQ(s.step, 5);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    std::vector<double> x = {2.0};
    const std::vector<ParamGroup> params = {{"x", x}};
    AdamState s = AdamState::like(params);
    GradBuffers g = GradBuffers::like(params);
    g.groups[0][0] = 1.0;
    const double lr[1] = {0.01};
    adam_step(params, g, s, lr);
    EXPECT_NEAR(x[0] - 2.0, -0.01, 1e-9);
    adam_step(params, g, s, lr);
    EXPECT_NEAR(x[0] - 2.0, -0.02, 1e-9);
}

TEST(Adam, EachGroupUsesItsOwnLearningRate)
{
    std::vector<double> planes = {0.0}, heads = {0.0};
    const std::vector<ParamGroup> params = {{"planes", planes}, {"heads", heads}};
    AdamState s = AdamState::like(params);
    GradBuffers g = GradBuffers::like(params);
    g.groups[0][0] = -3.0;
    g.groups[1][0] = 0.5;
    const TrainConfig cfg;
    const double lrs[2] = {cfg.lr_planes, cfg.lr_heads};
    adam_step(params, g, s, lrs);
    EXPECT_NEAR(planes[0], 0.01, 1e-9);
    EXPECT_NEAR(heads[0], -1e-4, 1e-11);
}

TEST(Adam, RejectsShapeMismatch)
{
    std::vector<double> x = {1.0, 2.0};
    const std::vector<ParamGroup> params = {{"x", x}};
    AdamState s = AdamState::like(params);
    GradBuffers g;
    g.groups = {{1.0}};
    const double lr[1] = {0.1};
    EXPECT_THROW(adam_step(params, g, s, lr), ValidationError);
}

TEST(TrainConfig, DefaultsFollowThePaper)
{
    const TrainConfig c;
    EXPECT_EQ(c.recon_iters, 750);
    EXPECT_EQ(c.sds_iters, 250);
    EXPECT_DOUBLE_EQ(c.lr_planes, 0.01);
    EXPECT_DOUBLE_EQ(c.lr_heads, 1e-4);
    EXPECT_EQ(c.views_per_step, 4);
    EXPECT_EQ(c.frames_per_step, 16);
    EXPECT_EQ(c.warmup_iters(), 375);
    TrainConfig bad;
    bad.lr_heads = 0.0;
    EXPECT_THROW(validate(bad), ValidationError);
    bad = TrainConfig{};
    bad.recon_iters = 0;
    EXPECT_THROW(validate(bad), ValidationError);
}

TEST(Schedule, WindowGrowsFromTwoToAllFrames)
{
    EXPECT_EQ(progressive_window(0, 16, 375), 2);
    EXPECT_EQ(progressive_window(375, 16, 375), 16);
    EXPECT_EQ(progressive_window(749, 16, 375), 16);
    int prev = 2;
    for (int k = 0; k < 400; ++k) {
        const int w = progressive_window(k, 16, 375);
        EXPECT_GE(w, prev);
        EXPECT_LE(w, 16);
        prev = w;
    }
    EXPECT_EQ(progressive_window(0, 16, 0), 16);
}

TEST(Schedule, SelectedFramesStayInsideTheWindow)
{
    for (int window = 2; window <= 16; ++window)
        for (int it = 0; it < 20; ++it) {
            const auto f = select_frames(window, 4, it);
            ASSERT_FALSE(f.empty());
            for (std::size_t k = 0; k < f.size(); ++k) {
                EXPECT_GE(f[k], 0);
                EXPECT_LT(f[k], window);
                if (k > 0) EXPECT_GT(f[k], f[k - 1]);
            }
        }
    EXPECT_EQ(select_frames(16, 16, 3).size(), 16u);
    EXPECT_EQ(select_views(4, 4, 9), (std::vector<int>{0, 1, 2, 3}));
}

TEST(Schedule, RescaledCameraProjectsToScaledPixels)
{
    const Camera cam = look_at(Vec3(0.5, 0.3, -3.0), Vec3::Zero(), 64, 64, 70.0);
    const Camera small = rescale_camera(cam, 16, 16);
    const Vec3 p(0.2, -0.1, 0.3);
    const Vec3 a = cam.to_camera(p), b = small.to_camera(p);
    const double ua = cam.fx * a.x() / a.z() + cam.cx, ub = small.fx * b.x() / b.z() + small.cx;
    EXPECT_NEAR(ub, (ua + 0.5) * 0.25 - 0.5, 1e-12);
}

TEST(Reconstruct, StaticTargetKeepsDeformationNearZero)
{
    const SyntheticScene scene = small_scene(0.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField field = small_field(cloud);
    (void)reconstruct_motion(cloud, field, scene.data, small_config(30));
    double worst = 0.0;
    for (double t : scene.data.times) {
        const DeformedCloud d = deform(cloud, field, t);
        for (std::size_t i = 0; i < cloud.size(); ++i)
            worst = std::max(worst, (d.cloud.positions[i] - cloud.positions[i]).norm());
    }
    EXPECT_LE(worst, 1e-3);
}

TEST(Reconstruct, FirstIterationLossEqualsStaticRenderLoss)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField field = small_field(cloud);
    const TrainConfig cfg = small_config(10);
    const auto trace = reconstruct_motion(cloud, field, scene.data, cfg);
    double expected = 0.0;
    for (int f : select_frames(progressive_window(0, 4, cfg.warmup_iters()), cfg.frames_per_step, 0))
        for (int v : select_views(2, cfg.views_per_step, 0)) {
            const RenderOutput r = render(cloud, scene.data.views[v]);
            expected += recon_loss(r.rgb, r.mask, scene.data.frames[v][f], scene.data.masks[v][f]).loss;
        }
    EXPECT_GT(expected, 0.0);
    EXPECT_NEAR(trace[0].rec, expected, 1e-12 * expected);
    EXPECT_LE(trace[0].arap, 1e-20);
}

TEST(Reconstruct, ColorsAndOpacitiesNeverChange)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField field = small_field(cloud);
    (void)reconstruct_motion(cloud, field, scene.data, small_config(15));
    for (double t : {0.0, 0.4, 1.0}) {
        const DeformedCloud d = deform(cloud, field, t);
        EXPECT_EQ(d.cloud.colors, cloud.colors);
        EXPECT_EQ(d.cloud.opacities, cloud.opacities);
    }
}

TEST(Reconstruct, SameSeedGivesBitwiseIdenticalTrace)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField a = small_field(cloud), b = small_field(cloud);
    set_thread_count(1);
    const auto ta = reconstruct_motion(cloud, a, scene.data, small_config(12));
    const auto tb = reconstruct_motion(cloud, b, scene.data, small_config(12));
    set_thread_count(0);
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t k = 0; k < ta.size(); ++k) {
        EXPECT_EQ(ta[k].rec, tb[k].rec);
        EXPECT_EQ(ta[k].arap, tb[k].arap);
        EXPECT_EQ(ta[k].total, tb[k].total);
    }
    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Reconstruct, ParallelRunMatchesSerialRun)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField a = small_field(cloud), b = small_field(cloud);
    set_thread_count(1);
    const auto ta = reconstruct_motion(cloud, a, scene.data, small_config(8));
    set_thread_count(4);
    const auto tb = reconstruct_motion(cloud, b, scene.data, small_config(8));
    set_thread_count(0);
    for (std::size_t k = 0; k < ta.size(); ++k) EXPECT_NEAR(ta[k].total, tb[k].total, 1e-6 * ta[k].total);
}

TEST(Refine, ZeroSdsWeightMatchesContinuedReconstruction)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    PerfectPredictor unused;

    TrainConfig cfg = small_config(8, 6);
    cfg.weights.sds = 0.0;
    HexPlaneField a = small_field(cloud);
    MotionOptimizer oa(cloud, a, scene.data, cfg);
    oa.reconstruct_motion();
    oa.refine_with_sds(&unused);

    HexPlaneField b = small_field(cloud);
    MotionOptimizer ob(cloud, b, scene.data, cfg);
    ob.reconstruct_motion();
    for (int k = 0; k < cfg.sds_iters; ++k) ob.step(nullptr, cfg.recon_iters + k);

    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Refine, PerfectDenoiserMatchesZeroWeightRun)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    PerfectPredictor perfect;

    TrainConfig with = small_config(8, 6);
    HexPlaneField a = small_field(cloud);
    MotionOptimizer oa(cloud, a, scene.data, with);
    oa.reconstruct_motion();
    const auto& trace = oa.refine_with_sds(&perfect);
    for (int k = 8; k < 14; ++k) EXPECT_EQ(trace[k].sds, 0.0);

    TrainConfig without = with;
    without.weights.sds = 0.0;
    HexPlaneField b = small_field(cloud);
    MotionOptimizer ob(cloud, b, scene.data, without);
    ob.reconstruct_motion();
    ob.refine_with_sds(&perfect);

    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Refine, TrainedToyDenoiserLowersSmoothedTotalLoss)
{
    const SyntheticScene scene = small_scene(20.0, 4, 2, 32, 30);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    ToyDenoiser model(DenoiserConfig{}, 2);
    DenoiserTrainOptions opts;
    opts.steps = 60;
    (void)run_train_denoiser(model, opts, &scene.data, 16);
    DenoiserPredictor predictor(model);

    TrainConfig cfg = small_config(20, 60);
    HexPlaneField field = small_field(cloud);
    MotionOptimizer opt(cloud, field, scene.data, cfg);
    opt.reconstruct_motion();
    const auto& trace = opt.refine_with_sds(&predictor);

    auto window_mean = [&](int first) {
        double s = 0.0;
        for (int k = first; k < first + 20; ++k) s += trace[k].total;
        return s / 20.0;
    };
    for (const auto& r : trace) EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_LE(window_mean(60), window_mean(20));
}

TEST(Refine, NonFiniteLossAbortsWithSnapshot)
{
    const SyntheticScene scene = small_scene(20.0);
    const GaussianCloud cloud = make_blob_cloud(30, 3);
    HexPlaneField field = small_field(cloud);
    field.head_values()[field.head_values().size() - 6] = std::numeric_limits<double>::quiet_NaN();
    TempDir dir("nan");
    TrainConfig cfg = small_config(3);
    cfg.snapshot_dir = dir.path();
    EXPECT_THROW((void)reconstruct_motion(cloud, field, scene.data, cfg), NumericError);
    EXPECT_TRUE(fs::exists(dir / "nonfinite_snapshot.a4df"));
}
