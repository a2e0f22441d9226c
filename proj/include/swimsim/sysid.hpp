#pragma once

#include "swimsim/actuation.hpp"
#include "swimsim/adjoint.hpp"
#include "swimsim/angle.hpp"
#include "swimsim/fem.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace swimsim {

/// One recorded (or synthetic) run: the bending-angle trace plus the drive
/// voltage and frequency it was recorded at. The trace starts at motion onset.
struct Dataset {
    std::string id;
    double voltage = 0.0;    // V
    double frequency = 0.0;  // Hz
    AngleTrace trace;
};

struct OptimizerConfig {
    double learning_rate_amplitude = 0.05;
    double learning_rate_slope = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_iterations = 200;
    /// Stop when |L_k - L_{k-window}| <= rel_tol * L_{k-window}.
    double rel_tol = 1e-6;
    int window = 10;
    double init_amplitude = 0.05;
    /// <= 0 means 4 * highest dataset frequency.
    double init_slope = 0.0;
    /// The slope learning rate acts on slope / slope_scale. <= 0 means 4 * highest dataset frequency.
    double slope_scale = 0.0;
    double amplitude_max = 0.95;
    double slope_min = 1e-3;
    /// <= 0 means 1 / dt.
    double slope_max = 0.0;
    double smoothing = 1e-3;
    int checkpoint_every = 1;
    /// Worker threads for per-dataset evaluations; 0 = hardware concurrency.
    int threads = 1;

    void validate() const;
};

struct DatasetError {
    std::string id;
    double voltage = 0.0;
    double frequency = 0.0;
    double mae = 0.0;
};

struct IterationRecord {
    int iteration = 0;
    double loss = 0.0;
    std::vector<double> amplitudes;
    double slope = 0.0;
    double grad_norm = 0.0;
};

struct FitResult {
    AmplitudeTable amplitude_table;
    double slope = 0.0;
    double train_mae = 0.0;
    std::vector<DatasetError> per_dataset_mae;
    int iterations = 0;
    std::vector<double> loss_history;
    std::vector<IterationRecord> log;
    double best_loss = 0.0;
    Keypoints keypoints;
};

/// Amplitude, slope and fixed drive settings for one dataset under the given table.
ActuationParams dataset_actuation(const ActuationParams& base, const AmplitudeTable& table, double slope,
                                  const Dataset& ds);

/// Jointly fits one amplitude per distinct voltage and one shared slope by
/// Adam on the summed per-dataset sin(theta) MSE. Returns the best iterate.
/// `progress`, if set, is called after each iteration.
FitResult identify(const std::vector<Dataset>& datasets, const SwimmerMesh& mesh, const SimConfig& cfg,
                   const ActuationParams& base, const OptimizerConfig& opt,
                   const std::function<void(const IterationRecord&)>& progress = {});

struct ValidationReport {
    std::vector<DatasetError> per_dataset;
    double aggregate_mae = 0.0;
    std::vector<AngleTrace> simulated;
    std::vector<bool> extrapolated;
};

/// Forward simulation of each dataset with the amplitude interpolated from
/// the fitted table; mean absolute sin(theta) error per dataset and their mean.
ValidationReport validate(const FitResult& fit, const std::vector<Dataset>& unseen, const SwimmerMesh& mesh,
                          const SimConfig& cfg, const ActuationParams& base);

/// Synthetic dataset: two periods simulated at `act`, sampled at `sample_rate` Hz from t = 0.
Dataset synthesize_dataset(const std::string& id, const SwimmerMesh& mesh, const SimConfig& cfg,
                           const ActuationParams& act, double voltage, double sample_rate = 120.0);

}  // namespace swimsim
