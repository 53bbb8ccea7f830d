#include "gmap/gmap.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gmap;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::mt19937_64& rng, double spread = 50.0) {
    std::uniform_real_distribution<double> u(-spread, spread);
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < n; ++i) p.emplace_back(u(rng), u(rng), 0.5 * u(rng));
    return p;
}

std::vector<Vec3> moved(const std::vector<Vec3>& p, const Mat3& r, const Vec3& t) {
    std::vector<Vec3> out;
    for (const auto& q : p) out.push_back(r * q + t);
    return out;
}

}  // namespace

TEST(Procrustes, IdentityAndRecovery) {
    std::mt19937_64 rng(1);
    const auto x = random_cloud(100, rng);
    const auto same = procrustes_align(x, x);
    EXPECT_LE((same.transform.rotation - Mat3::Identity()).norm(), 1e-10);
    EXPECT_LE(same.transform.translation.norm(), 1e-10);
    EXPECT_LE(same.rms_after, 1e-10);
    EXPECT_EQ(same.method, AlignMethod::procrustes_known_correspondence);

    for (int trial = 0; trial < 20; ++trial) {
        const Mat3 r = oracle::random_rotation(rng);
        const Vec3 t(10.0 * trial, -3.0, 7.5);
        const auto a = procrustes_align(x, moved(x, r, t));
        EXPECT_LE((a.transform.rotation - r).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LE((a.transform.translation - t).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_NEAR(a.transform.rotation.determinant(), 1.0, 1e-12);
        EXPECT_LE(a.rms_after, a.rms_before + 1e-12);
    }
}

TEST(Procrustes, OptimumBeatsPerturbedTransforms) {
    std::mt19937_64 rng(2);
    const auto x = random_cloud(60, rng);
    std::normal_distribution<double> noise(0.0, 0.5);
    auto y = moved(x, oracle::random_rotation(rng), Vec3(1, 2, 3));
    for (auto& p : y) p += Vec3(noise(rng), noise(rng), noise(rng));
    const auto a = procrustes_align(x, y);
    auto objective = [&](const Mat3& r, const Vec3& t) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (r * x[i] + t - y[i]).squaredNorm();
        return s;
    };
    const double best = objective(a.transform.rotation, a.transform.translation);
    EXPECT_NEAR(std::sqrt(best / x.size()), a.rms_after, 1e-10);
    std::normal_distribution<double> small(0.0, 1.0);
    for (int k = 0; k < 10000; ++k) {
        const Vec3 axis(small(rng), small(rng), small(rng));
        const Mat3 dr = oracle::rotation_about(axis, 0.02 * std::abs(small(rng)));
        const Vec3 dt(0.1 * small(rng), 0.1 * small(rng), 0.1 * small(rng));
        EXPECT_LE(best, objective(dr * a.transform.rotation, a.transform.translation + dt) + 1e-9);
    }
}

TEST(Procrustes, Errors) {
    const std::vector<Vec3> two{Vec3::Zero(), Vec3::UnitX()};
    EXPECT_THROW(procrustes_align(two, two), InvalidArgument);
    const std::vector<Vec3> three{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
    EXPECT_THROW(procrustes_align(three, two), InvalidArgument);
    const std::vector<Vec3> line{Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX()};
    EXPECT_TRUE(procrustes_align(line, line).degenerate);
}

TEST(Icp, IdenticalCloudsConvergeImmediately) {
    std::mt19937_64 rng(3);
    const auto x = random_cloud(200, rng);
    const auto a = icp_align(x, x);
    EXPECT_EQ(a.iterations, 1);
    EXPECT_EQ(a.rms_after, 0.0);
    EXPECT_EQ(a.method, AlignMethod::icp_nearest_neighbor);
}

TEST(Icp, RecoversSmallPerturbationOfDenseCloud) {
    const Mesh sphere = make_icosphere(4);
    std::vector<Vec3> x;
    for (const auto& p : sphere.vertices()) x.emplace_back(40.0 * p.x(), 25.0 * p.y(), 15.0 * p.z());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> angle(0.0, 5.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::normal_distribution<double> g(0.0, 1.0);
        const Mat3 r = oracle::rotation_about(Vec3(g(rng), g(rng), g(rng)), angle(rng) * std::numbers::pi / 180.0);
        const Vec3 t(0.5 * g(rng), 0.5 * g(rng), 0.5 * g(rng));
        const auto y = moved(x, r, t);
        IcpOptions opt;
        opt.max_iterations = 200;
        const auto a = icp_align(x, y, opt);
        EXPECT_LE((a.transform.rotation - r).cwiseAbs().maxCoeff(), 1e-4) << trial;
        EXPECT_LE((a.transform.translation - t).cwiseAbs().maxCoeff(), 1e-4) << trial;
        for (std::size_t k = 1; k < a.rms_history.size(); ++k) EXPECT_LE(a.rms_history[k], a.rms_history[k - 1]);
        EXPECT_NEAR(a.transform.rotation.determinant(), 1.0, 1e-12);
    }
}

TEST(Icp, MonotoneOnArbitraryInput) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_cloud(150, rng);
        const auto y = random_cloud(170, rng);
        IcpOptions opt;
        opt.point_to_plane = trial % 2 == 0;
        const auto a = icp_align(x, y, opt);
        for (std::size_t k = 1; k < a.rms_history.size(); ++k) EXPECT_LE(a.rms_history[k], a.rms_history[k - 1]);
        EXPECT_LE(a.rms_after, a.rms_before + 1e-12);
    }
}

TEST(Icp, SameOrderingMatchesProcrustes) {
    std::mt19937_64 rng(6);
    const auto x = random_cloud(80, rng);
    const auto a = icp_align(x, x);
    const auto b = procrustes_align(x, x);
    EXPECT_LE((a.transform.rotation - b.transform.rotation).norm(), 1e-10);
    EXPECT_LE(std::abs(a.rms_after - b.rms_after), 1e-10);
}

TEST(MseV, ValuesAndOracle) {
    std::mt19937_64 rng(7);
    const auto x = random_cloud(500, rng);
    EXPECT_EQ(mse_v(x, x), 0.0);
    auto shifted = x;
    for (auto& p : shifted) p.y() += 0.84;
    EXPECT_NEAR(mse_v(shifted, x), 0.84, 1e-12);
    EXPECT_NEAR(mse_v(shifted, x, true), 0.84 * 0.84, 1e-12);
    const auto y = random_cloud(500, rng);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i].x() - y[i].x(), dy = x[i].y() - y[i].y(), dz = x[i].z() - y[i].z();
        s += std::sqrt(dx * dx + dy * dy + dz * dz);
        s2 += dx * dx + dy * dy + dz * dz;
    }
    EXPECT_NEAR(mse_v(x, y), s / x.size(), 1e-12);
    EXPECT_NEAR(mse_v(x, y, true), s2 / x.size(), 1e-12 * s2 / x.size());
    EXPECT_THROW(mse_v(x, std::vector<Vec3>(3)), InvalidArgument);
}

TEST(MseN, Values) {
    const std::vector<Vec3> up(10, Vec3::UnitZ());
    EXPECT_EQ(mse_n(up, up), 0.0);
    const std::vector<Vec3> side(10, Vec3::UnitX());
    EXPECT_NEAR(mse_n(up, side), 90.0, 1e-12);
    auto one_flipped = up;
    one_flipped[4] = -Vec3::UnitZ();
    EXPECT_NEAR(mse_n(up, one_flipped), 18.0, 1e-12);
    // Non-unit inputs are renormalised; zero vectors are skipped and counted.
    auto scaled = up;
    scaled[0] *= 5.0;
    scaled[1] = Vec3::Zero();
    std::size_t skipped = 0;
    EXPECT_NEAR(mse_n(up, scaled, &skipped), 0.0, 1e-12);
    EXPECT_EQ(skipped, 1u);
    EXPECT_THROW(mse_n(up, std::vector<Vec3>(2, Vec3::UnitZ())), InvalidArgument);
}

TEST(MseN, MatchesLoopOracle) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Vec3> a, b;
    for (int k = 0; k < 400; ++k) {
        a.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
        b.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
    }
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double c = (a[k].x() * b[k].x() + a[k].y() * b[k].y() + a[k].z() * b[k].z()) / (a[k].norm() * b[k].norm());
        c = std::max(-1.0, std::min(1.0, c));
        s += std::acos(c) * 180.0 / std::numbers::pi;
    }
    EXPECT_NEAR(mse_n(a, b), s / a.size(), 1e-12);
}

TEST(Evaluate, InvariantUnderCommonRigidMotion) {
    const auto face = make_synthetic_face(21, 21);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<Vec3> gen;
    for (const auto& p : face.mesh.vertices()) gen.push_back(p + Vec3(noise(rng), noise(rng), noise(rng)));
    const Mat3 r0 = oracle::random_rotation(rng);
    const Mesh generated = face.mesh.with_vertices(moved(gen, r0, Vec3(5, 5, 5)));
    const auto base = evaluate_pair(generated, face.mesh);
    const Mat3 r = oracle::random_rotation(rng);
    const Vec3 t(-40, 12, 3);
    const auto both = evaluate_pair(generated.with_vertices(moved(generated.vertices(), r, t)),
                                    face.mesh.with_vertices(moved(face.mesh.vertices(), r, t)));
    EXPECT_NEAR(base.mse_v_mm, both.mse_v_mm, 1e-8);
    EXPECT_NEAR(base.mse_n_deg, both.mse_n_deg, 1e-8);
    EXPECT_GT(base.mse_v_mm, 0.1);

    const auto rigid = evaluate_pair(face.mesh.with_vertices(moved(face.mesh.vertices(), r, t)), face.mesh);
    EXPECT_LT(rigid.mse_v_mm, 1e-9);
    EXPECT_LT(rigid.mse_n_deg, 1e-5);
    const auto icp = evaluate_pair(face.mesh.with_vertices(moved(face.mesh.vertices(), oracle::rotation_about(Vec3(1, 2, 3), 0.05), t * 0.01)),
                                   face.mesh, AlignMethod::icp_nearest_neighbor);
    EXPECT_LT(icp.mse_v_mm, 1e-6);
    EXPECT_THROW(evaluate_pair(make_tetrahedron(), face.mesh), InvalidArgument);
}
