#include "gmap/gmap.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

using namespace gmap;

namespace {

Mesh parse(const std::string& text) {
    std::istringstream in(text);
    return parse_obj(in, "test.obj");
}

std::string throw_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(ObjIo, SingleTriangle) {
    const Mesh m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    EXPECT_EQ(m.num_vertices(), 3u);
    EXPECT_EQ(m.num_triangles(), 1u);
    const auto r = one_ring(m, 0);
    EXPECT_EQ(std::vector<int>(r.begin(), r.end()), (std::vector<int>{1, 2}));
}

TEST(ObjIo, QuadIsFanSplit) {
    const Mesh m = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    ASSERT_EQ(m.num_triangles(), 2u);
    EXPECT_EQ(m.triangles()[0], (Triangle{0, 1, 2}));
    EXPECT_EQ(m.triangles()[1], (Triangle{0, 2, 3}));
}

TEST(ObjIo, OutOfRangeIndexNamesLine) {
    const std::string msg = throw_message([] { parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n"); });
    EXPECT_NE(msg.find("test.obj:4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("out of range"), std::string::npos) << msg;
    EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n"), FormatError);
}

TEST(ObjIo, ParseErrorsNameTheLine) {
    EXPECT_NE(throw_message([] { parse("v 0 0\n"); }).find("test.obj:1"), std::string::npos);
    EXPECT_NE(throw_message([] { parse("v 0 0 0\nv 1 0 0\n\nf 1 2\n"); }).find("test.obj:4"), std::string::npos);
    EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 3\n"), FormatError);
    EXPECT_THROW(parse("f 1 2 3\n"), FormatError);
    EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n"), FormatError);
}

TEST(ObjIo, IgnoresTextureNormalAndSlashedIndices) {
    const Mesh m = parse(
        "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\ng part\nusemtl x\nf 1/1/1 2/1/1 -1//1\n");
    ASSERT_EQ(m.num_triangles(), 1u);
    EXPECT_EQ(m.triangles()[0], (Triangle{0, 1, 2}));
}

TEST(ObjIo, RoundTripWithinMicron) {
    const auto face = make_synthetic_face(21, 21);
    std::stringstream first;
    write_obj(first, face.mesh);
    const Mesh a = parse_obj(first);
    std::stringstream second;
    write_obj(second, a);
    const Mesh b = parse_obj(second);
    ASSERT_EQ(a.triangles(), b.triangles());
    ASSERT_EQ(a.num_vertices(), b.num_vertices());
    for (std::size_t i = 0; i < a.num_vertices(); ++i) EXPECT_LE((a.vertices()[i] - b.vertices()[i]).norm(), 1e-6);
    EXPECT_EQ(face.mesh.triangles(), a.triangles());
}

TEST(ObjIo, FileRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "gmap_test_mesh";
    std::filesystem::create_directories(dir);
    const Mesh m = make_icosahedron();
    save_obj(dir / "ico.obj", m);
    const Mesh back = load_obj(dir / "ico.obj");
    EXPECT_EQ(back.triangles(), m.triangles());
    EXPECT_THROW(load_obj(dir / "missing.obj"), FormatError);
}

TEST(MeshCore, ConstructorRejectsBadTriangles) {
    EXPECT_THROW(Mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 3}}), InvalidArgument);
    EXPECT_THROW(Mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 1}}), InvalidArgument);
}

TEST(MeshCore, AdjacencyIsSymmetric) {
    std::mt19937_64 rng(7);
    const Mesh m = oracle::random_disk_mesh(9, 7, rng);
    for (std::size_t i = 0; i < m.num_vertices(); ++i)
        for (int j : m.ring(static_cast<int>(i))) {
            const auto rj = m.ring(j);
            EXPECT_TRUE(std::binary_search(rj.begin(), rj.end(), static_cast<int>(i)));
        }
}

TEST(MeshCore, ValenceSumIsTwiceEdgeCount) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const Mesh m = oracle::random_disk_mesh(5 + trial, 6, rng);
        std::set<std::pair<int, int>> edges;
        for (const auto& t : m.triangles())
            for (int k = 0; k < 3; ++k) edges.insert(std::minmax(t[k], t[(k + 1) % 3]));
        std::size_t total = 0;
        for (std::size_t i = 0; i < m.num_vertices(); ++i) total += m.ring(static_cast<int>(i)).size();
        EXPECT_EQ(total, 2 * edges.size());
        EXPECT_EQ(m.num_edges(), edges.size());
    }
}

TEST(MeshCore, RingIndependentOfTriangleOrder) {
    std::mt19937_64 rng(3);
    const Mesh m = oracle::random_disk_mesh(8, 8, rng);
    auto tris = m.triangles();
    std::shuffle(tris.begin(), tris.end(), rng);
    for (auto& t : tris) std::rotate(t.begin(), t.begin() + 1, t.end());
    const Mesh shuffled(m.vertices(), tris);
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        const auto a = m.ring(static_cast<int>(i));
        const auto b = shuffled.ring(static_cast<int>(i));
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
}

TEST(MeshCore, OneRingValences) {
    const Mesh hex = make_hex_patch(2);
    int center = -1;
    for (std::size_t i = 0; i < hex.num_vertices(); ++i)
        if (hex.vertices()[i].norm() < 1e-12) center = static_cast<int>(i);
    ASSERT_GE(center, 0);
    EXPECT_EQ(one_ring(hex, center).size(), 6u);

    const Mesh tri({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 2}});
    EXPECT_EQ(one_ring(tri, 0).size(), 2u);
    EXPECT_THROW(one_ring(tri, 3), InvalidArgument);
    EXPECT_THROW(one_ring(tri, -1), InvalidArgument);

    const Mesh ico = make_icosahedron();
    // Neighbours counted from an independent edge enumeration.
    std::vector<std::set<int>> nbrs(ico.num_vertices());
    for (const auto& t : ico.triangles())
        for (int a : t)
            for (int b : t)
                if (a != b) nbrs[static_cast<std::size_t>(a)].insert(b);
    for (std::size_t i = 0; i < ico.num_vertices(); ++i) {
        EXPECT_EQ(one_ring(ico, static_cast<int>(i)).size(), 5u);
        EXPECT_EQ(nbrs[i].size(), 5u);
    }
}

TEST(Topology, ClosedTetrahedron) {
    const auto r = validate_topology(make_tetrahedron());
    EXPECT_TRUE(r.is_manifold);
    EXPECT_TRUE(r.is_oriented);
    EXPECT_EQ(r.boundary_loops, 0);
    EXPECT_TRUE(r.boundary_vertices.empty());
    EXPECT_EQ(r.n_vertices, 4u);
    EXPECT_EQ(r.n_triangles, 4u);
}

TEST(Topology, SingleTriangleBoundary) {
    const Mesh m({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 2}});
    const auto r = validate_topology(m);
    EXPECT_EQ(r.boundary_loops, 1);
    EXPECT_EQ(r.boundary_vertices, (std::vector<int>{0, 1, 2}));
}

TEST(Topology, Bowtie) {
    const Mesh m({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(-1, 0, 0), Vec3(-1, -1, 0)},
                 {{0, 1, 2}, {0, 3, 4}});
    const auto r = validate_topology(m);
    EXPECT_FALSE(r.is_manifold);
    EXPECT_EQ(r.non_manifold_vertices, 1u);
}

TEST(Topology, NonManifoldEdgeAndOrientation) {
    const Mesh fin({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(0, 0, 1)},
                   {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}});
    const auto r = validate_topology(fin);
    EXPECT_FALSE(r.is_manifold);
    EXPECT_EQ(r.non_manifold_edges, 1u);
    EXPECT_FALSE(r.is_oriented);

    const Mesh flipped({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)}, {{0, 1, 2}, {0, 3, 2}});
    EXPECT_FALSE(validate_topology(flipped).is_oriented);
}

TEST(Topology, BoundaryLoopIsClosedCycleWithSurfaceOnLeft) {
    std::mt19937_64 rng(5);
    const Mesh m = oracle::random_disk_mesh(10, 8, rng);
    const auto r = validate_topology(m);
    ASSERT_EQ(r.boundary_loops, 1);
    const auto& loop = r.boundary_vertices;
    EXPECT_EQ(loop.size(), 2u * (10 + 8) - 4);
    std::set<std::pair<int, int>> directed;
    for (const auto& t : m.triangles())
        for (int k = 0; k < 3; ++k) directed.insert({t[k], t[(k + 1) % 3]});
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const int a = loop[k], b = loop[(k + 1) % loop.size()];
        // Each step follows a triangle edge in its own direction and has no twin.
        EXPECT_TRUE(directed.count({a, b}));
        EXPECT_FALSE(directed.count({b, a}));
    }
    // CCW grid: the surface on the left means the loop runs counter-clockwise in xy.
    double area2 = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const Vec3& p = m.vertex(loop[k]);
        const Vec3& q = m.vertex(loop[(k + 1) % loop.size()]);
        area2 += p.x() * q.y() - q.x() * p.y();
    }
    EXPECT_GT(area2, 0.0);
}

TEST(Topology, IsolatedVertexReported) {
    const Mesh m({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), Vec3(5, 5, 5)}, {{0, 1, 2}});
    EXPECT_EQ(validate_topology(m).isolated_vertices, 1u);
}

TEST(Normals, FlatGridPointsUp) {
    const auto n = vertex_normals(make_unit_grid(6, 5));
    EXPECT_TRUE(n.degenerate.empty());
    for (const auto& v : n.normals) EXPECT_LE((v - Vec3::UnitZ()).norm(), 1e-15);
}

TEST(Normals, IcosphereWithinFiveDegrees) {
    const Mesh s = make_icosphere(3);
    ASSERT_EQ(s.num_triangles(), 1280u);
    const auto n = vertex_normals(s);
    for (std::size_t i = 0; i < s.num_vertices(); ++i) {
        const double c = std::clamp(n.normals[i].dot(s.vertices()[i].normalized()), -1.0, 1.0);
        EXPECT_LT(std::acos(c) * 180.0 / std::numbers::pi, 5.0);
        EXPECT_NEAR(n.normals[i].norm(), 1.0, 1e-12);
    }
}

TEST(Normals, AreaWeightedAverage) {
    // Two faces at right angles with areas 1 and 2: shared vertices get the weighted blend.
    // Face {0, 3, 1} has normal (0,0,-4) x (1,0,0) = (0,-4,0).
    const Mesh m({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, -4)}, {{0, 1, 2}, {0, 3, 1}});
    const auto n = vertex_normals(m);
    const Vec3 expect = (Vec3(0, 0, 2) + Vec3(0, -4, 0)).normalized();
    EXPECT_LE((n.normals[0] - expect).norm(), 1e-15);
    EXPECT_LE((n.normals[2] - Vec3::UnitZ()).norm(), 1e-15);
}

TEST(Normals, FlippingOneTriangleIsLocal) {
    // Curved sheet, so that one reversed face changes its vertices' normals.
    const Mesh flat = make_unit_grid(7, 7);
    std::vector<Vec3> curved;
    for (const auto& p : flat.vertices()) curved.emplace_back(p.x(), p.y(), 0.3 * std::sin(3.0 * p.x()) + 0.2 * p.y() * p.y());
    const Mesh grid = flat.with_vertices(curved);
    auto tris = grid.triangles();
    const std::size_t pick = 20;
    std::swap(tris[pick][1], tris[pick][2]);
    const Mesh flipped(grid.vertices(), tris);
    const auto a = vertex_normals(grid);
    const auto b = vertex_normals(flipped);
    std::set<int> touched(tris[pick].begin(), tris[pick].end());
    for (std::size_t i = 0; i < grid.num_vertices(); ++i) {
        if (touched.count(static_cast<int>(i))) continue;
        EXPECT_EQ(a.normals[i], b.normals[i]);
    }
    bool changed = false;
    for (int v : touched) changed |= (a.normals[static_cast<std::size_t>(v)] - b.normals[static_cast<std::size_t>(v)]).norm() > 1e-9;
    EXPECT_TRUE(changed);
}

TEST(Normals, IsolatedVertexFlagged) {
    const Mesh m({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), Vec3(5, 5, 5)}, {{0, 1, 2}});
    const auto n = vertex_normals(m);
    EXPECT_EQ(n.degenerate, (std::vector<int>{3}));
    EXPECT_EQ(n.normals[3], Vec3::Zero());
}
