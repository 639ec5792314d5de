#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "json.hpp"
#include "mm/errors.hpp"
#include "mm/fem.hpp"
#include "mm/mesh_io.hpp"
#include "mm/monitor.hpp"
#include "mm/pipeline.hpp"
#include "mm/rng.hpp"

namespace mm {

double gaussian_mix_u(const std::vector<GaussianComponent>& gs, Vec2 p) {
    double u = 0.0;
    for (const auto& g : gs) {
        const double dx = p.x - g.center.x, dy = p.y - g.center.y;
        u += g.amplitude * std::exp(-(dx * dx + dy * dy) / (g.width * g.width));
    }
    return u;
}

double gaussian_mix_f(const std::vector<GaussianComponent>& gs, Vec2 p) {
    // f = -laplace(u) for u = sum A exp(-r^2 / w^2)
    double f = 0.0;
    for (const auto& g : gs) {
        const double dx = p.x - g.center.x, dy = p.y - g.center.y;
        const double w2 = g.width * g.width;
        const double r2 = dx * dx + dy * dy;
        const double e = g.amplitude * std::exp(-r2 / w2);
        f -= e * (4.0 * r2 / (w2 * w2) - 4.0 / w2);
    }
    return f;
}

namespace {

MAStats stats_of(const MAResult& r) {
    MAStats s;
    s.iterations = r.iterations;
    s.final_residual = r.residuals.empty() ? 0.0 : r.residuals.back();
    s.wall_time_ms = r.wall_time_ms;
    s.eq_before = r.equidistribution_before;
    s.eq_after = r.equidistribution_after;
    return s;
}

// Try the MA solve without throwing; success = converged and inversion-free.
bool try_ma(const Mesh& mesh, const MonitorField& monitor, const MAOptions& base,
            MAResult& out) {
    MAOptions opts = base;
    opts.throw_on_failure = false;
    try {
        out = ma_adapt(mesh, monitor, opts);
    } catch (const std::runtime_error&) {  // NumericFailure / InvalidMesh
        return false;
    }
    return out.converged && inversion_fraction(mesh, out.coords) == 0.0;
}

}  // namespace

std::vector<DatasetRecord> generate_poisson_dataset(int count, const DatasetOptions& opts,
                                                    uint64_t seed) {
    if (count < 1) throw InvalidArgument("generate_poisson_dataset: count must be >= 1");
    if (opts.resolutions.empty())
        throw InvalidArgument("generate_poisson_dataset: no resolutions configured");
    Rng rng(seed, "datagen");
    std::vector<DatasetRecord> records;
    int failures = 0;
    for (int i = 0; i < count; ++i) {
        ProblemSample sample;
        sample.kind = ProblemSample::Kind::Poisson;
        sample.seed = seed;
        sample.resolution =
            opts.resolutions[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(opts.resolutions.size()) - 1))];
        const int ncomp = rng.uniform_int(1, 3);
        for (int c = 0; c < ncomp; ++c) {
            GaussianComponent g;
            g.center = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
            g.width = rng.uniform(0.05, 0.25);
            g.amplitude = rng.uniform(0.5, 1.5);
            sample.gaussians.push_back(g);
        }
        Mesh mesh = build_unit_square_mesh(sample.resolution);
        ScalarField u_exact(mesh);
        for (int n = 0; n < mesh.node_count(); ++n)
            u_exact[n] = gaussian_mix_u(sample.gaussians, mesh.node(n));
        ScalarField u = solve_poisson(
            mesh, [&](Vec2 p) { return gaussian_mix_f(sample.gaussians, p); },
            [&](Vec2 p) { return gaussian_mix_u(sample.gaussians, p); });
        MonitorField monitor =
            evaluate_monitor(u, u_exact, recover_hessian(u), opts.alpha, opts.beta);
        MAResult ma;
        if (!try_ma(mesh, monitor, opts.ma, ma)) {
            ++failures;
            continue;
        }
        DatasetRecord rec{sample, std::move(mesh), std::move(ma.coords),
                          opts.alpha, opts.beta, stats_of(ma)};
        records.push_back(std::move(rec));
    }
    if (failures > opts.max_failure_fraction * count)
        throw NumericFailure("generate_poisson_dataset: " + std::to_string(failures) + " of " +
                             std::to_string(count) + " MA solves failed (limit " +
                             std::to_string(opts.max_failure_fraction * 100.0) + "%)");
    return records;
}

std::vector<DatasetRecord> generate_burgers_dataset(int trajectories, int steps,
                                                    const DatasetOptions& opts, uint64_t seed) {
    if (trajectories < 1 || steps < 1)
        throw InvalidArgument("generate_burgers_dataset: trajectories and steps must be >= 1");
    if (opts.nu_range.first <= 0.0 || opts.nu_range.second < opts.nu_range.first)
        throw InvalidArgument("generate_burgers_dataset: invalid nu_range");
    Rng rng(seed, "datagen");
    std::vector<DatasetRecord> records;
    int failures = 0;
    const int total = trajectories * steps;
    for (int traj = 0; traj < trajectories; ++traj) {
        const int res = opts.resolutions[static_cast<size_t>(traj) % opts.resolutions.size()];
        const int ref_res = opts.ref_factor * (res - 1) + 1;  // nested refinement
        const double nu = rng.uniform(opts.nu_range.first, opts.nu_range.second);
        const Vec2 center{rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
        const double width = rng.uniform(0.1, 0.2);
        const double amp = rng.uniform(0.5, 1.0);
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        auto bump = [&](Vec2 p) {
            const double dx = p.x - center.x, dy = p.y - center.y;
            return amp * std::exp(-(dx * dx + dy * dy) / (width * width));
        };
        Mesh mesh = build_unit_square_mesh(res);
        Mesh refined = build_unit_square_mesh(ref_res);
        VectorField u0(mesh), u0r(refined);
        for (int n = 0; n < mesh.node_count(); ++n) {
            const double b = bump(mesh.node(n));
            u0.ux[static_cast<size_t>(n)] = b * std::cos(angle);
            u0.uy[static_cast<size_t>(n)] = b * std::sin(angle);
        }
        for (int n = 0; n < refined.node_count(); ++n) {
            const double b = bump(refined.node(n));
            u0r.ux[static_cast<size_t>(n)] = b * std::cos(angle);
            u0r.uy[static_cast<size_t>(n)] = b * std::sin(angle);
        }
        auto wtraj = solve_burgers(mesh, u0, nu, opts.dt, steps);
        auto rtraj = solve_burgers(refined, u0r, nu, opts.dt, steps);
        for (int t = 0; t < steps; ++t) {
            ProblemSample sample;
            sample.kind = ProblemSample::Kind::Burgers;
            sample.seed = seed;
            sample.resolution = res;
            sample.nu = nu;
            sample.dt = opts.dt;
            sample.trajectory = traj;
            sample.step = t;
            const VectorField& ut = wtraj[static_cast<size_t>(t)];
            VectorField u_exact(mesh);
            u_exact.ux = transfer_values(refined, rtraj[static_cast<size_t>(t)].ux, mesh.nodes()).values;
            u_exact.uy = transfer_values(refined, rtraj[static_cast<size_t>(t)].uy, mesh.nodes()).values;
            MonitorField monitor = evaluate_monitor(
                ut, u_exact, recover_hessian_values(mesh, ut.ux),
                recover_hessian_values(mesh, ut.uy), opts.alpha, opts.beta);
            MAResult ma;
            if (!try_ma(mesh, monitor, opts.ma, ma)) {
                ++failures;
                continue;
            }
            DatasetRecord rec{sample, mesh, std::move(ma.coords), opts.alpha, opts.beta,
                              stats_of(ma)};
            rec.vel_x = ut.ux;
            rec.vel_y = ut.uy;
            rec.ref_resolution = ref_res;
            rec.ref0_x = rtraj[static_cast<size_t>(t)].ux;
            rec.ref0_y = rtraj[static_cast<size_t>(t)].uy;
            rec.ref_x = rtraj[static_cast<size_t>(t) + 1].ux;
            rec.ref_y = rtraj[static_cast<size_t>(t) + 1].uy;
            records.push_back(std::move(rec));
        }
    }
    if (failures > opts.max_failure_fraction * total)
        throw NumericFailure("generate_burgers_dataset: " + std::to_string(failures) + " of " +
                             std::to_string(total) + " MA solves failed");
    return records;
}

int state_param_count(ProblemSample::Kind kind) {
    return kind == ProblemSample::Kind::Burgers ? 2 : 1;
}

InputState record_state(const DatasetRecord& rec) {
    InputState state;
    const double density = static_cast<double>(rec.sample.resolution);  // nodes per unit length
    if (rec.sample.kind == ProblemSample::Kind::Poisson) {
        state.kind = InputState::Kind::PoissonSource;
        const auto gs = rec.sample.gaussians;
        state.sampler = [gs](Vec2 p) { return gaussian_mix_f(gs, p); };
        state.params = {density};
    } else {
        state.kind = InputState::Kind::BurgersVelocity;
        auto loc = std::make_shared<TriangleLocator>(rec.mesh, rec.mesh.nodes());
        const Mesh* mesh = &rec.mesh;
        std::vector<double> speed(rec.vel_x.size());
        for (size_t i = 0; i < speed.size(); ++i)
            speed[i] = std::hypot(rec.vel_x[i], rec.vel_y[i]);
        state.sampler = [loc, mesh, speed](Vec2 p) {
            return interpolate_at(*mesh, speed, p, *loc);
        };
        state.params = {rec.sample.nu, density};
    }
    return state;
}

// ---- dataset files ---------------------------------------------------------

namespace {

nlohmann::json sample_json(const ProblemSample& s) {
    nlohmann::json j;
    j["kind"] = s.kind == ProblemSample::Kind::Poisson ? "poisson" : "burgers";
    j["resolution"] = s.resolution;
    j["seed"] = s.seed;
    if (s.kind == ProblemSample::Kind::Poisson) {
        auto& gs = j["gaussians"] = nlohmann::json::array();
        for (const auto& g : s.gaussians)
            gs.push_back({{"cx", g.center.x},
                          {"cy", g.center.y},
                          {"width", g.width},
                          {"amplitude", g.amplitude}});
    } else {
        j["nu"] = s.nu;
        j["dt"] = s.dt;
        j["trajectory"] = s.trajectory;
        j["step"] = s.step;
    }
    return j;
}

ProblemSample sample_from_json(const nlohmann::json& j) {
    ProblemSample s;
    s.kind = j.at("kind") == "burgers" ? ProblemSample::Kind::Burgers
                                       : ProblemSample::Kind::Poisson;
    s.resolution = j.at("resolution").get<int>();
    s.seed = j.value("seed", 0ULL);
    if (s.kind == ProblemSample::Kind::Poisson) {
        for (const auto& g : j.at("gaussians"))
            s.gaussians.push_back({{g.at("cx").get<double>(), g.at("cy").get<double>()},
                                   g.at("width").get<double>(),
                                   g.at("amplitude").get<double>()});
    } else {
        s.nu = j.at("nu").get<double>();
        s.dt = j.at("dt").get<double>();
        s.trajectory = j.value("trajectory", -1);
        s.step = j.value("step", -1);
    }
    return s;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<DatasetRecord>& records,
                   uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("write_dataset: cannot create " + dir + ": " + ec.message());
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["count"] = records.size();
    auto& recs = manifest["records"] = nlohmann::json::array();
    for (size_t i = 0; i < records.size(); ++i) {
        const DatasetRecord& r = records[i];
        char name[32];
        std::snprintf(name, sizeof(name), "record_%04zu.mesh", i);
        const std::string path = dir + "/" + name;
        std::ofstream os(path);
        if (!os) throw IoError("write_dataset: cannot open " + path);
        write_mesh(os, r.mesh);
        std::vector<std::vector<double>> tcols(2);
        for (const Vec2& p : r.target) {
            tcols[0].push_back(p.x);
            tcols[1].push_back(p.y);
        }
        write_values_block(os, "target", tcols);
        if (r.sample.kind == ProblemSample::Kind::Burgers) {
            write_values_block(os, "velocity", {r.vel_x, r.vel_y});
            write_values_block(os, "reference0", {r.ref0_x, r.ref0_y});
            write_values_block(os, "reference", {r.ref_x, r.ref_y});
        }
        if (!os) throw IoError("write_dataset: write failed for " + path);
        nlohmann::json rj;
        rj["file"] = name;
        rj["sample"] = sample_json(r.sample);
        rj["monitor_alpha"] = r.monitor_alpha;
        rj["monitor_beta"] = r.monitor_beta;
        rj["ref_resolution"] = r.ref_resolution;
        rj["ma"] = {{"iterations", r.ma.iterations},
                    {"final_residual", r.ma.final_residual},
                    {"wall_time_ms", r.ma.wall_time_ms},
                    {"eq_before", r.ma.eq_before},
                    {"eq_after", r.ma.eq_after}};
        recs.push_back(std::move(rj));
    }
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw IoError("write_dataset: cannot open manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("write_dataset: manifest write failed in " + dir);
}

std::vector<DatasetRecord> load_dataset(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw IoError("load_dataset: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_dataset: bad manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("version", 0) != 1)
        throw IoError("load_dataset: unsupported manifest version in " + dir);
    std::vector<DatasetRecord> records;
    for (const auto& rj : manifest.at("records")) {
        const std::string path = dir + "/" + rj.at("file").get<std::string>();
        std::ifstream is(path);
        if (!is) throw IoError("load_dataset: cannot open " + path);
        Mesh mesh = read_mesh(is);
        auto tcols = read_values_block(is, "target");
        if (tcols.size() != 2 || static_cast<int>(tcols[0].size()) != mesh.node_count())
            throw IoError("load_dataset: bad target block in " + path);
        DatasetRecord rec{sample_from_json(rj.at("sample")), std::move(mesh), {},
                          rj.value("monitor_alpha", 0.0), rj.value("monitor_beta", 0.0), {}};
        for (size_t i = 0; i < tcols[0].size(); ++i)
            rec.target.push_back({tcols[0][i], tcols[1][i]});
        const auto& ma = rj.at("ma");
        rec.ma.iterations = ma.value("iterations", 0);
        rec.ma.final_residual = ma.value("final_residual", 0.0);
        rec.ma.wall_time_ms = ma.value("wall_time_ms", 0.0);
        rec.ma.eq_before = ma.value("eq_before", 0.0);
        rec.ma.eq_after = ma.value("eq_after", 0.0);
        rec.ref_resolution = rj.value("ref_resolution", 0);
        if (rec.sample.kind == ProblemSample::Kind::Burgers) {
            auto v = read_values_block(is, "velocity");
            auto r0 = read_values_block(is, "reference0");
            auto r = read_values_block(is, "reference");
            if (v.size() != 2 || r0.size() != 2 || r.size() != 2)
                throw IoError("load_dataset: bad velocity/reference block in " + path);
            rec.vel_x = std::move(v[0]);
            rec.vel_y = std::move(v[1]);
            rec.ref0_x = std::move(r0[0]);
            rec.ref0_y = std::move(r0[1]);
            rec.ref_x = std::move(r[0]);
            rec.ref_y = std::move(r[1]);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace mm
