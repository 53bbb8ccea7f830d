#include "gmap/gmap.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace gmap;

namespace {

std::string bytes_of(const GeometricMap& m) {
    std::ostringstream out(std::ios::binary);
    write_gmap(out, m);
    return out.str();
}

std::string error_of(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    try {
        read_gmap(in, "m.gmap");
    } catch (const FormatError& e) {
        return e.what();
    }
    return {};
}

GeometricMap float_exact_map(int h, int w, std::mt19937_64& rng) {
    auto m = oracle::random_map(h, w, rng, 0.6);
    for (double& v : m.data) v = static_cast<float>(v);
    return m;
}

}  // namespace

TEST(GmapFormat, RoundTripAndLayout) {
    std::mt19937_64 rng(1);
    const auto m = float_exact_map(6, 5, rng);
    const std::string b = bytes_of(m);
    ASSERT_EQ(b.size(), 4 + 12 + 6 * 5 * 3 * 4 + 6 * 5u);
    EXPECT_EQ(b.substr(0, 4), "GMAP");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 6);  // H, little-endian
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 5);  // W
    EXPECT_EQ(static_cast<unsigned char>(b[12]), 3);
    std::istringstream in(b, std::ios::binary);
    const auto back = read_gmap(in);
    EXPECT_EQ(back.height, 6);
    EXPECT_EQ(back.width, 5);
    EXPECT_EQ(back.data, m.data);
    EXPECT_EQ(back.mask, m.mask);
}

TEST(GmapFormat, RejectsBadInput) {
    std::mt19937_64 rng(2);
    auto m = float_exact_map(4, 4, rng);
    std::string b = bytes_of(m);

    std::string bad = b;
    bad[0] = 'X';
    EXPECT_NE(error_of(bad).find("bad magic"), std::string::npos);
    EXPECT_NE(error_of(b.substr(0, b.size() - 3)).find("truncated"), std::string::npos);
    bad = b;
    bad[12] = 4;
    EXPECT_NE(error_of(bad).find("3 channels"), std::string::npos);

    // NaN inside the mask names the pixel.
    int vx = -1, vy = -1;
    for (int y = 0; y < 4 && vx < 0; ++y)
        for (int x = 0; x < 4; ++x)
            if (m.valid(x, y)) {
                vx = x;
                vy = y;
                break;
            }
    ASSERT_GE(vx, 0);
    auto nan_map = m;
    nan_map.at(vx, vy, 1) = std::numeric_limits<double>::quiet_NaN();
    const std::string msg = error_of(bytes_of(nan_map));
    EXPECT_NE(msg.find("pixel (" + std::to_string(vx) + ", " + std::to_string(vy) + ")"), std::string::npos) << msg;

    // A masked pixel must be zero.
    int mx = -1, my = -1;
    for (int y = 0; y < 4 && mx < 0; ++y)
        for (int x = 0; x < 4; ++x)
            if (!m.valid(x, y)) {
                mx = x;
                my = y;
                break;
            }
    ASSERT_GE(mx, 0);
    auto dirty = m;
    dirty.at(mx, my, 0) = 1.0;
    EXPECT_NE(error_of(bytes_of(dirty)).find("not zero"), std::string::npos);
}

TEST(TableFormat, RoundTrip) {
    const auto face = make_synthetic_face(15, 15);
    const auto emb = solve_harmonic(face.mesh, boundary_to_circle(validate_topology(face.mesh), face.mesh));
    UVEmbedding sq = emb;
    for (auto& p : sq.uv) p = 0.5 * (p + Vec2(1, 1));
    const auto t = build_raster_table(sq, face.mesh, 32);
    std::stringstream s(std::ios::in | std::ios::out | std::ios::binary);
    write_table(s, t);
    const auto back = read_table(s);
    EXPECT_EQ(back.resolution, 32);
    EXPECT_EQ(back.n_vertices, face.mesh.num_vertices());
    EXPECT_EQ(back.conflicts, t.conflicts);
    EXPECT_EQ(back.mask, t.mask);
    for (std::size_t k = 0; k < t.cells.size(); ++k) {
        EXPECT_EQ(back.cells[k].triangle, t.cells[k].triangle);
        EXPECT_EQ(back.cells[k].vertices, t.cells[k].vertices);
        EXPECT_EQ(back.cells[k].weights, t.cells[k].weights);
    }
}

TEST(TableFormat, RejectsTampering) {
    const Mesh grid = make_unit_grid(3, 3);
    UVEmbedding emb;
    for (const auto& p : grid.vertices()) emb.uv.push_back(p.head<2>());
    const auto t = build_raster_table(emb, grid, 8);
    std::ostringstream out(std::ios::binary);
    write_table(out, t);
    const std::string b = out.str();
    auto expect_error = [](std::string bytes, const std::string& needle) {
        std::istringstream in(bytes, std::ios::binary);
        try {
            read_table(in, "t.bin");
            ADD_FAILURE() << "no error for " << needle;
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    std::string bad = b;
    bad[1] = 'Q';
    expect_error(bad, "bad magic");
    bad = b;
    bad[4] = 9;
    expect_error(bad, "version");
    expect_error(b.substr(0, 40), "truncated");
    bad = b;
    bad[bad.size() - 1] = 0;  // last mask byte no longer matches its cell
    expect_error(bad, "mask disagrees");
}

TEST(UvJson, RoundTripAndErrors) {
    UVEmbedding e;
    e.frame = Frame::square;
    e.uv = {Vec2(0.1, 0.2), Vec2(0.123456789012345, 0.9)};
    const auto j = uv_to_json(e);
    EXPECT_EQ(j.at("schema_version"), 1);
    const auto back = uv_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.frame, Frame::square);
    EXPECT_EQ(back.uv, e.uv);
    auto bad = j;
    bad["n"] = 5;
    EXPECT_THROW(uv_from_json(bad), FormatError);
    bad = j;
    bad["frame"] = "hexagon";
    EXPECT_THROW(uv_from_json(bad), FormatError);
    bad = j;
    bad["uv"][0] = {1.0};
    EXPECT_THROW(uv_from_json(bad), FormatError);
}

TEST(SpecJson, RoundTripAndMissingField) {
    const auto face = make_synthetic_face(11, 11);
    const auto j = spec_to_json(face.spec);
    const auto back = spec_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.corners, face.spec.corners);
    EXPECT_EQ(back.axis_vertices, face.spec.axis_vertices);
    ASSERT_EQ(back.landmark_pairs.size(), face.spec.landmark_pairs.size());
    for (std::size_t k = 0; k < back.landmark_pairs.size(); ++k) {
        EXPECT_EQ(back.landmark_pairs[k].left, face.spec.landmark_pairs[k].left);
        EXPECT_EQ(back.landmark_pairs[k].target, face.spec.landmark_pairs[k].target);
    }
    for (const char* field : {"landmark_pairs", "axis", "corners"}) {
        auto bad = j;
        bad.erase(field);
        try {
            spec_from_json(bad, "s.json");
            ADD_FAILURE();
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos);
        }
    }
    auto bad = j;
    bad["corners"] = {1, 2, 3};
    EXPECT_THROW(spec_from_json(bad), FormatError);
}

TEST(BundledData, FaceAndSpecMatchGenerator) {
    const Mesh m = load_obj(std::string(GMAP_DATA_DIR) + "/synthetic_face.obj");
    const auto spec = spec_from_json(load_json(std::string(GMAP_DATA_DIR) + "/synthetic_face_spec.json"));
    const auto face = make_synthetic_face();
    EXPECT_EQ(m.num_vertices(), face.mesh.num_vertices());
    EXPECT_EQ(m.triangles(), face.mesh.triangles());
    for (std::size_t i = 0; i < m.num_vertices(); ++i)
        EXPECT_LE((m.vertices()[i] - face.mesh.vertices()[i]).norm(), 1e-3);
    EXPECT_EQ(spec.corners, face.spec.corners);
    EXPECT_EQ(spec.axis_vertices, face.spec.axis_vertices);
}
