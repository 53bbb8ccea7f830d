// gmap: command-line front end. Every stage reads and writes files so each can be rerun alone.
//
// Exit codes: 0 success, 1 quality failure, 2 usage or spec error, 3 I/O or format error.

#include "gmap/gmap.hpp"
#include "gmap/png_export.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

enum Exit { kOk = 0, kQuality = 1, kUsage = 2, kIo = 3 };

struct StageFailure {
    int code;
    std::string stage;
    std::string message;
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const gmap::FormatError& e) {
        throw StageFailure{kIo, name, e.what()};
    } catch (const gmap::InvalidArgument& e) {
        throw StageFailure{kUsage, name, e.what()};
    } catch (const gmap::Error& e) {
        throw StageFailure{kQuality, name, e.what()};
    } catch (const std::bad_alloc&) {
        throw;
    } catch (const StageFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFailure{kIo, name, e.what()};
    }
}

struct Options {
    int resolution = gmap::kMapResolution;
    int max_iters = 200;
    double threshold = 1e-5;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string weights;
    std::string format = "text";
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StageFailure{kIo, "output", "cannot create directory " + dir + ": " + ec.message()};
}

void emit(const Options& o, const json& j, const std::string& text) {
    if (o.format == "json") std::cout << j.dump(2) << '\n';
    else std::cout << text;
}

json stats_json(const gmap::RoundtripStats& s, double diagonal) {
    return {{"mean_mm", s.mean},
            {"max_mm", s.max},
            {"counted_vertices", s.counted},
            {"masked_vertices", s.masked},
            {"masked_mean_mm", s.masked_mean},
            {"masked_max_mm", s.masked_max},
            {"bbox_diagonal_mm", diagonal},
            {"mean_relative_to_diagonal", diagonal > 0.0 ? s.mean / diagonal : 0.0}};
}

double bbox_diagonal(const gmap::Mesh& m) {
    gmap::Vec3 lo = m.vertices().front();
    gmap::Vec3 hi = lo;
    for (const auto& v : m.vertices()) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
}

json topology_json(const gmap::TopologyReport& r) {
    return {{"is_manifold", r.is_manifold},
            {"is_oriented", r.is_oriented},
            {"boundary_loops", r.boundary_loops},
            {"outer_loop_length", r.boundary_vertices.size()},
            {"n_vertices", r.n_vertices},
            {"n_triangles", r.n_triangles},
            {"non_manifold_edges", r.non_manifold_edges},
            {"non_manifold_vertices", r.non_manifold_vertices},
            {"isolated_vertices", r.isolated_vertices}};
}

int cmd_check(const Options& o, const std::string& mesh_path, const std::string& table_path) {
    const auto mesh = stage("load", [&] { return gmap::load_obj(mesh_path); });
    const auto report = gmap::validate_topology(mesh);
    const auto normals = gmap::vertex_normals(mesh);
    json j = {{"schema_version", kSchemaVersion},
              {"command", "check"},
              {"topology", topology_json(report)},
              {"degenerate_normals", normals.degenerate.size()}};
    std::ostringstream text;
    text << "vertices " << report.n_vertices << ", triangles " << report.n_triangles << '\n'
         << "manifold " << (report.is_manifold ? "yes" : "no") << ", oriented " << (report.is_oriented ? "yes" : "no")
         << ", boundary loops " << report.boundary_loops << '\n';
    if (!table_path.empty()) {
        const auto table = stage("table", [&] { return gmap::load_table(table_path); });
        j["table"] = {{"resolution", table.resolution}, {"valid_pixels", table.valid_pixels()}, {"conflicts", table.conflicts}};
        text << "table " << table.resolution << "x" << table.resolution << ", valid pixels " << table.valid_pixels()
             << ", conflicts " << table.conflicts << '\n';
    }
    const bool ok = report.is_manifold && report.is_oriented;
    j["ok"] = ok;
    emit(o, j, text.str());
    return ok ? kOk : kQuality;
}

int cmd_build_map(const Options& o, const std::string& mesh_path, const std::string& spec_path, const std::string& solve) {
    if (o.resolution < 4) throw StageFailure{kUsage, "options", "--resolution must be >= 4"};
    const auto mesh = stage("load", [&] { return gmap::load_obj(mesh_path); });
    const auto raw_spec = stage("spec", [&] { return gmap::spec_from_json(gmap::load_json(spec_path), spec_path); });
    const auto report = gmap::validate_topology(mesh);
    const auto spec = stage("spec", [&] { return gmap::resolve_key_spec(raw_spec, mesh, report); });
    const auto initial = stage("harmonic", [&] {
        if (!report.is_manifold) throw gmap::InvalidArgument("mesh is not manifold");
        return gmap::solve_harmonic(mesh, gmap::boundary_to_circle(report, mesh));
    });
    const std::size_t initial_flips = gmap::check_flips(initial, mesh);

    gmap::DeformParams params;
    params.max_iterations = o.max_iters;
    params.convergence_threshold = o.threshold;
    params.solve = solve == "energy" ? gmap::OffsetSolve::energy : gmap::OffsetSolve::moore_penrose;
    const auto result = stage("deform", [&] { return gmap::deform_to_gmap(mesh, initial, spec, params); });
    const std::size_t flips = gmap::check_flips(result.embedding, mesh);
    const double sym = gmap::symmetry_error(result.embedding, spec);

    const auto table = stage("raster", [&] { return gmap::build_raster_table(result.embedding, mesh, o.resolution); });
    const auto rt = gmap::roundtrip_error(mesh, result.embedding, table);

    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    stage("write", [&] {
        gmap::save_json(dir / "uv.json", gmap::uv_to_json(result.embedding));
        gmap::save_table(dir / "table.bin", table);
        return 0;
    });

    const bool ok = result.converged && flips == 0;
    json log = json::array();
    for (const auto& e : result.log) log.push_back({e.iteration, e.mean_offset, e.max_offset});
    json j = {{"schema_version", kSchemaVersion},
              {"command", "build-map"},
              {"mesh", mesh_path},
              {"spec", spec_path},
              {"topology", topology_json(report)},
              {"harmonic_flips", initial_flips},
              {"offset_solve", solve},
              {"threshold", o.threshold},
              {"max_iterations", o.max_iters},
              {"iterations", result.iterations},
              {"converged", result.converged},
              {"final_mean_offset", result.log.empty() ? 0.0 : result.log.back().mean_offset},
              {"offset_log", std::move(log)},
              {"template_scale", result.scale},
              {"fixed_vertices", result.targets.size()},
              {"flips", flips},
              {"symmetry_error", sym},
              {"resolution", o.resolution},
              {"valid_pixels", table.valid_pixels()},
              {"conflicts", table.conflicts},
              {"roundtrip", stats_json(rt, bbox_diagonal(mesh))},
              {"ok", ok}};
    stage("write", [&] {
        gmap::save_json(dir / "report.json", j);
        return 0;
    });
    std::ostringstream text;
    text << "iterations " << result.iterations << (result.converged ? " (converged)" : " (NOT converged)") << '\n'
         << "flips " << flips << ", symmetry error " << sym << '\n'
         << "table " << o.resolution << "x" << o.resolution << ", valid pixels " << table.valid_pixels()
         << ", conflicts " << table.conflicts << '\n'
         << "round-trip mean " << rt.mean << " mm, max " << rt.max << " mm\n"
         << "wrote " << (dir / "uv.json").string() << ", " << (dir / "table.bin").string() << ", "
         << (dir / "report.json").string() << '\n';
    emit(o, j, text.str());
    return ok ? kOk : kQuality;
}

int cmd_rasterize(const Options& o, const std::string& mesh_path, const std::string& table_path) {
    const auto mesh = stage("load", [&] { return gmap::load_obj(mesh_path); });
    const auto table = stage("table", [&] { return gmap::load_table(table_path); });
    const auto map = stage("forward", [&] { return gmap::forward_map(mesh.vertices(), table); });
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    stage("write", [&] {
        gmap::save_gmap(dir / "map.gmap", map);
        gmap::save_png_preview(dir / "map.png", map);
        return 0;
    });
    json j = {{"schema_version", kSchemaVersion},
              {"command", "rasterize"},
              {"resolution", map.height},
              {"valid_pixels", table.valid_pixels()},
              {"gmap", (dir / "map.gmap").string()},
              {"png", (dir / "map.png").string()}};
    emit(o, j, "wrote " + (dir / "map.gmap").string() + " and " + (dir / "map.png").string() + "\n");
    return kOk;
}

int cmd_sample_back(const Options& o, bool resolution_given, const std::string& map_path, const std::string& uv_path,
                    const std::string& template_path) {
    const auto map = stage("map", [&] { return gmap::load_gmap(map_path); });
    const auto emb = stage("uv", [&] { return gmap::uv_from_json(gmap::load_json(uv_path), uv_path); });
    const auto mesh = stage("load", [&] { return gmap::load_obj(template_path); });
    stage("check", [&] {
        if (resolution_given && (map.height != o.resolution || map.width != o.resolution))
            throw gmap::InvalidArgument("map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                                        ", expected resolution " + std::to_string(o.resolution));
        if (emb.uv.size() != mesh.num_vertices())
            throw gmap::InvalidArgument("uv has " + std::to_string(emb.uv.size()) + " vertices, template has " +
                                        std::to_string(mesh.num_vertices()));
        return 0;
    });
    gmap::SampleStats ss;
    const auto points = gmap::backward_sample(map, emb, &ss);
    const auto out = mesh.with_vertices(points);
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    stage("write", [&] {
        gmap::save_obj(dir / "out.obj", out);
        return 0;
    });
    gmap::RoundtripStats st;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double e = (points[i] - mesh.vertices()[i]).norm();
        if (ss.touched_mask[i]) {
            ++st.masked;
            st.masked_mean += e;
            st.masked_max = std::max(st.masked_max, e);
        } else {
            ++st.counted;
            st.mean += e;
            st.max = std::max(st.max, e);
        }
    }
    if (st.counted) st.mean /= static_cast<double>(st.counted);
    if (st.masked) st.masked_mean /= static_cast<double>(st.masked);
    json j = {{"schema_version", kSchemaVersion},
              {"command", "sample-back"},
              {"out", (dir / "out.obj").string()},
              {"clamped_samples", ss.clamped},
              {"error_vs_template", stats_json(st, bbox_diagonal(mesh))}};
    stage("write", [&] {
        gmap::save_json(dir / "sample_back.json", j);
        return 0;
    });
    std::ostringstream text;
    text << "wrote " << (dir / "out.obj").string() << '\n'
         << "error vs template: mean " << st.mean << " mm, max " << st.max << " mm (" << st.masked
         << " vertices read masked pixels)\n";
    emit(o, j, text.str());
    return kOk;
}

// Loads a shape file as a flat array: OBJ vertex coordinates or GMAP pixel data.
std::vector<double> load_shape(const fs::path& path) {
    std::vector<double> flat;
    if (path.extension() == ".gmap") {
        const auto map = gmap::load_gmap(path);
        flat = map.data;
    } else {
        const auto mesh = gmap::load_obj(path);
        for (const auto& v : mesh.vertices()) flat.insert(flat.end(), {v.x(), v.y(), v.z()});
    }
    return flat;
}

std::vector<double> load_shape_batch(const json& list, const fs::path& base, const std::string& what) {
    if (!list.is_array() || list.empty()) throw gmap::FormatError(what + " must be a non-empty list of files");
    std::vector<double> all;
    std::size_t per = 0;
    for (const auto& item : list) {
        const auto one = load_shape(base / item.get<std::string>());
        if (per == 0) per = one.size();
        if (one.size() != per)
            throw gmap::InvalidArgument(what + ": file " + item.get<std::string>() + " has " + std::to_string(one.size()) +
                                        " values, expected " + std::to_string(per));
        all.insert(all.end(), one.begin(), one.end());
    }
    return all;
}

gmap::LossWeights load_weights(const std::string& path) {
    gmap::LossWeights w;
    if (path.empty()) return w;
    const json j = gmap::load_json(path);
    if (!j.is_object()) throw gmap::FormatError(path + ": weights must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        double* slot = key == "lambda_cls_c"   ? &w.lambda_cls_c
                       : key == "lambda_cls_m" ? &w.lambda_cls_m
                       : key == "lambda_cyc"   ? &w.lambda_cyc
                       : key == "lambda_rec"   ? &w.lambda_rec
                       : key == "lambda_sym"   ? &w.lambda_sym
                       : key == "lambda_gp"    ? &w.lambda_gp
                       : key == "alpha"        ? &w.alpha
                                               : nullptr;
        if (!slot) throw gmap::InvalidArgument(path + ": unknown weight '" + key + "'");
        if (!value.is_number()) throw gmap::FormatError(path + ": weight '" + key + "' is not a number");
        *slot = value.get<double>();
    }
    w.validate();
    return w;
}

json weights_json(const gmap::LossWeights& w) {
    return {{"lambda_cls_c", w.lambda_cls_c}, {"lambda_cls_m", w.lambda_cls_m}, {"lambda_cyc", w.lambda_cyc},
            {"lambda_rec", w.lambda_rec},     {"lambda_sym", w.lambda_sym},     {"lambda_gp", w.lambda_gp},
            {"alpha", w.alpha}};
}

json cls_json(const gmap::ClassificationTerms& c) {
    return {{"expression", c.expression}, {"gender", c.gender}, {"age", c.age}, {"total", c.total}};
}

gmap::ClassificationTerms eval_cls(const json& section, const fs::path& base, gmap::ClsMode mode) {
    std::vector<double> scores;
    for (const auto& row : section.at("scores")) {
        if (row.size() != gmap::kLabelSize) throw gmap::InvalidArgument("classification scores rows must have 23 values");
        for (const auto& v : row) scores.push_back(v.get<double>());
    }
    json labels = section.at("labels");
    if (labels.is_string()) labels = gmap::load_json(base / labels.get<std::string>());
    std::vector<gmap::DomainLabel> targets;
    for (const auto& l : labels) {
        if (!l.is_array() || l.size() != 3)
            throw gmap::InvalidArgument("labels must be [expression, gender, age_years] triples");
        targets.push_back(gmap::encode_label(l[0].get<int>(), l[1].get<int>(), l[2].get<double>()));
    }
    return gmap::classification_loss(scores, targets, mode);
}

int cmd_losses_eval(const Options& o, const std::string& manifest_path) {
    const json m = stage("manifest", [&] { return gmap::load_json(manifest_path); });
    const fs::path base = fs::path(manifest_path).parent_path();
    const auto w = stage("weights", [&] { return load_weights(o.weights); });
    gmap::LossParts parts;
    json out = {{"schema_version", kSchemaVersion}, {"command", "losses-eval"}};
    json notes = json::array();
    out["weights"] = weights_json(w);
    out["weights_source"] = o.weights.empty() ? "defaults" : o.weights;

    stage("losses", [&] {
        try {
            if (m.contains("adversarial")) {
                const auto& a = m.at("adversarial");
                const auto real = a.at("d_real").get<std::vector<double>>();
                const auto fake = a.at("d_fake").get<std::vector<double>>();
                const auto norms = a.at("grad_norms").get<std::vector<double>>();
                const auto t = gmap::adversarial_terms(real, fake, norms, w.alpha, w.lambda_gp);
                parts.adv = t.l_adv;
                out["adversarial"] = {{"real_mean", t.real_mean}, {"fake_mean", t.fake_mean}, {"gap", t.gap},
                                      {"gp", t.gp},               {"l_adv", t.l_adv}};
            } else {
                notes.push_back("adversarial section absent; l_adv = 0");
            }
            if (m.contains("classification")) {
                const auto& c = m.at("classification");
                if (c.contains("real")) parts.cls_real = eval_cls(c.at("real"), base, gmap::ClsMode::real);
                if (c.contains("fake")) parts.cls_fake = eval_cls(c.at("fake"), base, gmap::ClsMode::fake);
                out["cls_real"] = cls_json(parts.cls_real);
                out["cls_fake"] = cls_json(parts.cls_fake);
            } else {
                notes.push_back("classification section absent; terms = 0");
            }
            if (m.contains("cycle")) {
                const auto x = load_shape_batch(m.at("cycle").at("x"), base, "cycle.x");
                const auto y = load_shape_batch(m.at("cycle").at("x_cycled"), base, "cycle.x_cycled");
                parts.cyc = gmap::cycle_loss(x, y);
            }
            if (m.contains("reconstruction")) {
                const auto x = load_shape_batch(m.at("reconstruction").at("x"), base, "reconstruction.x");
                const auto y = load_shape_batch(m.at("reconstruction").at("x_same"), base, "reconstruction.x_same");
                parts.rec = gmap::reconstruction_loss(x, y);
            }
            out["cyc"] = parts.cyc;
            out["rec"] = parts.rec;
            if (m.contains("symmetry")) {
                const auto& s = m.at("symmetry");
                std::vector<gmap::GeometricMap> maps;
                for (const auto& f : s.at("maps")) maps.push_back(gmap::load_gmap(base / f.get<std::string>()));
                std::vector<std::uint8_t> flags(maps.size(), 0);
                if (s.contains("asymmetric")) {
                    const auto b = s.at("asymmetric").get<std::vector<bool>>();
                    if (b.size() != maps.size()) throw gmap::InvalidArgument("symmetry.asymmetric length differs from maps");
                    for (std::size_t k = 0; k < b.size(); ++k) flags[k] = b[k] ? 1 : 0;
                }
                const auto t = gmap::symmetry_loss(maps, flags);
                parts.sym = t.value;
                out["sym"] = {{"value", t.value}, {"included", t.included}, {"excluded", t.excluded}};
                if (t.all_excluded) notes.push_back("every symmetry sample is flagged asymmetric; symmetry term is 0");
            } else {
                out["sym"] = {{"value", 0.0}, {"included", 0}, {"excluded", 0}};
            }
        } catch (const json::exception& e) {
            throw gmap::FormatError(manifest_path + ": " + e.what());
        }
        return 0;
    });
    const auto total = stage("total", [&] { return gmap::total_losses(parts, w); });
    out["L_D"] = total.l_d;
    out["L_G"] = total.l_g;
    out["notes"] = notes;
    ensure_dir(o.out_dir);
    const fs::path path = fs::path(o.out_dir) / "losses.json";
    stage("write", [&] {
        gmap::save_json(path, out);
        return 0;
    });
    std::ostringstream text;
    text << "L_D " << total.l_d << "\nL_G " << total.l_g << "\nwrote " << path.string() << '\n';
    for (const auto& n : notes) text << "note: " << n.get<std::string>() << '\n';
    emit(o, out, text.str());
    return kOk;
}

json trace_json(const gmap::ShapeTrace& t) {
    auto row = [](const gmap::TraceRow& r) {
        return json{{"name", r.name},
                    {"kind", gmap::to_string(r.layer.kind)},
                    {"kernel", r.layer.kernel},
                    {"stride", r.layer.stride},
                    {"pad", r.layer.pad},
                    {"out_channels", r.layer.out_channels},
                    {"shape", r.shape.dims}};
    };
    json rows = json::array();
    for (const auto& r : t.rows) rows.push_back(row(r));
    json taps = json::array();
    for (const auto& r : t.pyramid_taps) taps.push_back(row(r));
    return {{"title", t.title}, {"rows", rows}, {"pyramid_taps", taps}, {"adversarial_length", t.adversarial_length()}};
}

int cmd_trace(const Options& o) {
    const auto g = gmap::trace_generator();
    const auto d = gmap::trace_discriminator();
    json j = {{"schema_version", kSchemaVersion}, {"generator", trace_json(g)}, {"discriminator", trace_json(d)}};
    emit(o, j, gmap::format_trace(g) + "\n" + gmap::format_trace(d));
    return kOk;
}

int cmd_metrics(const Options& o, const std::string& a_path, const std::string& b_path, const std::string& method,
                bool squared) {
    const auto a = stage("load", [&] { return gmap::load_obj(a_path); });
    const auto b = stage("load", [&] { return gmap::load_obj(b_path); });
    const auto m = method == "icp" ? gmap::AlignMethod::icp_nearest_neighbor
                                   : gmap::AlignMethod::procrustes_known_correspondence;
    const auto rep = stage("metrics", [&] { return gmap::evaluate_pair(a, b, m, squared); });
    json j = {{"schema_version", kSchemaVersion},
              {"method", gmap::to_string(rep.alignment.method)},
              {"rms_before", rep.alignment.rms_before},
              {"rms_after", rep.alignment.rms_after},
              {"iterations", rep.alignment.iterations},
              {"squared", squared},
              {"mse_v_mm", rep.mse_v_mm},
              {"mse_n_deg", rep.mse_n_deg},
              {"skipped_normals", rep.skipped_normals}};
    std::ostringstream text;
    text << "method " << gmap::to_string(rep.alignment.method) << "\nrms before " << rep.alignment.rms_before
         << " mm, after " << rep.alignment.rms_after << " mm\nMSE-V " << rep.mse_v_mm << " mm\nMSE-N "
         << rep.mse_n_deg << " deg\n";
    emit(o, j, text.str());
    return kOk;
}

int cmd_synth_face(const Options& o, int cols, int rows) {
    const auto face = stage("synth", [&] { return gmap::make_synthetic_face(cols, rows); });
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    stage("write", [&] {
        gmap::save_obj(dir / "synthetic_face.obj", face.mesh);
        gmap::save_json(dir / "synthetic_face_spec.json", gmap::spec_to_json(face.spec));
        return 0;
    });
    json j = {{"schema_version", kSchemaVersion},
              {"n_vertices", face.mesh.num_vertices()},
              {"n_triangles", face.mesh.num_triangles()},
              {"obj", (dir / "synthetic_face.obj").string()},
              {"spec", (dir / "synthetic_face_spec.json").string()}};
    emit(o, j, "wrote " + (dir / "synthetic_face.obj").string() + " and " + (dir / "synthetic_face_spec.json").string() + "\n");
    return kOk;
}

int cmd_augment(const Options& o, const std::string& mesh_path) {
    const auto mesh = stage("load", [&] { return gmap::load_obj(mesh_path); });
    const auto aug = gmap::sample_augmentation(o.seed);
    const gmap::Mat3 m = aug.matrix();
    gmap::Vec3 centre = gmap::Vec3::Zero();
    for (const auto& v : mesh.vertices()) centre += v;
    centre /= static_cast<double>(mesh.num_vertices());
    std::vector<gmap::Vec3> moved;
    for (const auto& v : mesh.vertices()) moved.push_back(centre + m * (v - centre));
    ensure_dir(o.out_dir);
    const fs::path path = fs::path(o.out_dir) / "augmented.obj";
    stage("write", [&] {
        gmap::save_obj(path, mesh.with_vertices(std::move(moved)));
        return 0;
    });
    json j = {{"schema_version", kSchemaVersion},
              {"seed", o.seed},
              {"scale", aug.scale},
              {"euler_deg", aug.euler_deg},
              {"out", path.string()}};
    std::ostringstream text;
    text << "seed " << o.seed << ": scale " << aug.scale << ", euler " << aug.euler_deg[0] << ' ' << aug.euler_deg[1]
         << ' ' << aug.euler_deg[2] << " deg\nwrote " << path.string() << '\n';
    emit(o, j, text.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Square, symmetric geometric maps for registered face meshes"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--format", o.format, "Console output")->check(CLI::IsMember({"json", "text"}));

    auto add_out = [&o](CLI::App* c) { c->add_option("--out-dir", o.out_dir, "Output directory"); };

    std::string mesh_path, spec_path, table_path, map_path, uv_path, manifest, other_path;
    std::string solve = "moore_penrose";
    std::string method = "procrustes";
    bool squared = false;
    int cols = 55, rows = 55;

    auto* check = app.add_subcommand("check", "Topology report for a mesh (and optionally its raster table)");
    check->add_option("mesh", mesh_path, "OBJ mesh")->required();
    check->add_option("--table", table_path, "Raster table to summarise");

    auto* build = app.add_subcommand("build-map", "Harmonic init, square/symmetric deformation and raster table");
    build->add_option("mesh", mesh_path, "Template OBJ")->required();
    build->add_option("spec", spec_path, "Key-vertex spec JSON")->required();
    build->add_option("--resolution", o.resolution, "Map resolution");
    build->add_option("--max-iters", o.max_iters, "Deformation iteration cap")->check(CLI::PositiveNumber);
    build->add_option("--threshold", o.threshold, "Mean-offset convergence threshold (uv units)")
        ->check(CLI::PositiveNumber);
    build->add_option("--solve", solve, "Offset solve")->check(CLI::IsMember({"moore_penrose", "energy"}));
    add_out(build);

    auto* raster = app.add_subcommand("rasterize", "Forward-map mesh positions through a raster table");
    raster->add_option("mesh", mesh_path, "OBJ mesh")->required();
    raster->add_option("table", table_path, "Raster table")->required();
    add_out(raster);

    auto* back = app.add_subcommand("sample-back", "Bilinear read of a GMAP at each vertex uv");
    back->add_option("map", map_path, "GMAP file")->required();
    back->add_option("uv", uv_path, "uv.json")->required();
    back->add_option("template", other_path, "Template OBJ (topology and reference positions)")->required();
    auto* res_back = back->add_option("--resolution", o.resolution, "Expected map resolution");
    add_out(back);

    auto* losses = app.add_subcommand("losses-eval", "Evaluate every loss term over a batch manifest");
    losses->add_option("manifest", manifest, "Batch manifest JSON")->required();
    losses->add_option("--weights", o.weights, "Loss weights JSON (defaults when omitted)");
    add_out(losses);

    auto* trace = app.add_subcommand("trace", "Print generator and discriminator shape traces");

    auto* metrics = app.add_subcommand("metrics", "Align a generated mesh to ground truth and score it");
    metrics->add_option("generated", mesh_path, "Generated OBJ")->required();
    metrics->add_option("truth", other_path, "Ground-truth OBJ")->required();
    metrics->add_option("--method", method, "Alignment")->check(CLI::IsMember({"procrustes", "icp"}));
    metrics->add_flag("--squared", squared, "Mean squared distance instead of mean distance");

    auto* synth = app.add_subcommand("synth-face", "Write the synthetic face template and its key-vertex spec");
    synth->add_option("--cols", cols, "Lattice columns (odd)");
    synth->add_option("--rows", rows, "Lattice rows");
    add_out(synth);

    auto* augment = app.add_subcommand("augment", "Apply a seeded random scale and rotation to a mesh");
    augment->add_option("mesh", mesh_path, "OBJ mesh")->required();
    augment->add_option("--seed", o.seed, "Random seed");
    add_out(augment);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*check) return cmd_check(o, mesh_path, table_path);
        if (*build) return cmd_build_map(o, mesh_path, spec_path, solve);
        if (*raster) return cmd_rasterize(o, mesh_path, table_path);
        if (*back) return cmd_sample_back(o, res_back->count() > 0, map_path, uv_path, other_path);
        if (*losses) return cmd_losses_eval(o, manifest);
        if (*trace) return cmd_trace(o);
        if (*metrics) return cmd_metrics(o, mesh_path, other_path, method, squared);
        if (*synth) return cmd_synth_face(o, cols, rows);
        if (*augment) return cmd_augment(o, mesh_path);
    } catch (const StageFailure& f) {
        std::cerr << "error [" << f.stage << "]: " << f.message << '\n';
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kQuality;
    }
    return kUsage;
}
