#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mm/deformers.hpp"
#include "mm/ma_mover.hpp"
#include "mm/mesh.hpp"

namespace mm {

struct GaussianComponent {
    Vec2 center;
    double width = 0.1;
    double amplitude = 1.0;
};

/// Analytic mixed-Gaussian sample: u, its source f = -laplace(u), and the
/// boundary data u0 = u restricted to the boundary.
double gaussian_mix_u(const std::vector<GaussianComponent>& gs, Vec2 p);
double gaussian_mix_f(const std::vector<GaussianComponent>& gs, Vec2 p);

struct ProblemSample {
    enum class Kind { Poisson, Burgers };
    Kind kind = Kind::Poisson;
    int resolution = 15;  // n-by-n working mesh
    uint64_t seed = 0;
    std::vector<GaussianComponent> gaussians;  // Poisson: the analytic u
    double nu = 0.0, dt = 0.0;                 // Burgers
    int trajectory = -1, step = -1;
};

struct MAStats {
    int iterations = 0;
    double final_residual = 0.0;
    double wall_time_ms = 0.0;
    double eq_before = 0.0, eq_after = 0.0;
};

/// One supervised training/evaluation case: problem, working mesh, and the
/// mover's target coordinates (always inversion-free, same topology).
struct DatasetRecord {
    ProblemSample sample;
    Mesh mesh;
    std::vector<Vec2> target;  // x-bar
    double monitor_alpha = 0.0, monitor_beta = 0.0;
    MAStats ma;
    // Burgers only: the state u_t on the working mesh, plus the refined-mesh
    // solution at t (ref0) and t+1 (ref); the refined mesh is rebuilt from
    // ref_resolution on demand. Error evaluation starts every candidate mesh
    // from an interpolation of ref0 so uniform and adapted meshes face the
    // same initial data.
    std::vector<double> vel_x, vel_y;
    int ref_resolution = 0;
    std::vector<double> ref0_x, ref0_y;
    std::vector<double> ref_x, ref_y;
};

struct DatasetOptions {
    std::vector<int> resolutions = {15, 20};
    double alpha = 5.0, beta = 5.0;  // monitor weights
    MAOptions ma;
    double max_failure_fraction = 0.2;
    // Burgers
    double dt = 0.02;
    std::pair<double, double> nu_range = {2e-3, 1e-2};
    int ref_factor = 4;  // refined reference mesh resolution multiplier
};

/// Mixed-Gaussian Poisson cases with MA targets. Samples whose MA solve fails
/// are dropped (counted); more than max_failure_fraction failures throws
/// NumericFailure.
std::vector<DatasetRecord> generate_poisson_dataset(int count, const DatasetOptions& opts,
                                                    uint64_t seed);

/// Gaussian-bump Burgers trajectories; one record per timestep with the
/// current velocity as state and the refined-mesh solution as reference.
std::vector<DatasetRecord> generate_burgers_dataset(int trajectories, int steps,
                                                    const DatasetOptions& opts, uint64_t seed);

/// Deformer conditioning input for a record: Poisson samples expose the
/// source f and p = [mesh density]; Burgers samples expose the speed |u| and
/// p = [nu, mesh density]. Density = nodes per unit length of the mesh.
InputState record_state(const DatasetRecord& rec);
int state_param_count(ProblemSample::Kind kind);  // 1 (Poisson) or 2 (Burgers)

/// Dataset directory: JSON manifest + one text mesh file per record.
void write_dataset(const std::string& dir, const std::vector<DatasetRecord>& records,
                   uint64_t seed);
std::vector<DatasetRecord> load_dataset(const std::string& dir);

struct TrainOptions {
    int epochs = 60;
    int batch_size = 6;
    AdamOptions adam;
    std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
};

struct TrainResult {
    DeformerModel model;
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;  // mean train loss per epoch
    bool nan_abort = false;          // model holds the last finite state
    std::string log;
};

/// Supervised training: minimize the mean absolute coordinate error against
/// the MA targets with Adam over shuffled mini-batches. Deterministic for a
/// fixed seed.
TrainResult train(const std::string& kind, const std::vector<DatasetRecord>& dataset,
                  const TrainOptions& opts, uint64_t seed);

/// FEM error of a record's problem solved on the given node coordinates,
/// measured against the analytic solution (Poisson) or the refined-mesh
/// reference (Burgers, one timestep ahead).
double sample_error(const DatasetRecord& rec, const std::vector<Vec2>& coords);

struct MethodRow {
    std::string name;
    double mean_reduction_pct = 0.0, std_reduction_pct = 0.0;
    double mean_time_ms = 0.0;
    double inversion_pct = 0.0;  // inverted elements over all test elements
    int illegal_samples = 0;     // samples scored 0% via the inversion rule
    std::vector<double> per_sample_reduction_pct;
    std::vector<double> per_sample_time_ms;
};

struct EvalReport {
    std::vector<MethodRow> rows;
    int sample_count = 0;
    std::string header;  // timing methodology note

    std::string to_text() const;  // formatted table
    std::string to_csv() const;   // machine-readable
};

/// Error-reduction benchmark: for every method and record, deform, score
/// (e_init - e_adapt) / e_init (inverted outputs score 0 and are counted),
/// and time the full deform call including feature extraction. The "ma"
/// method reuses the dataset's stored targets and solver timings.
EvalReport evaluate(const std::vector<DatasetRecord>& test,
                    const std::vector<std::pair<std::string, const DeformerModel*>>& models,
                    bool include_ma);

}  // namespace mm
