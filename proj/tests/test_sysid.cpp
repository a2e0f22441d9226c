#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>

using namespace swimsim;
using testutil::coarse_mesh;
using testutil::drive;

namespace {

std::vector<Dataset> small_grid() {
    std::vector<Dataset> out;
    const SimConfig cfg;
    for (double volts : {3500.0, 5500.0}) {
        double a = 0.04 * volts / 1000.0 - 0.04;
        Dataset ds = synthesize_dataset("v" + std::to_string(int(volts)), coarse_mesh(), cfg,
                                        drive(a, 8.0, 3.5), volts, 60.0);
        ds.trace = testutil::truncate(ds.trace, 0.3);
        out.push_back(ds);
    }
    return out;
}

OptimizerConfig few_iterations(int n) {
    OptimizerConfig opt;
    opt.max_iterations = n;
    return opt;
}

}  // namespace

TEST_CASE("dataset order does not change the fit") {
    auto data = small_grid();
    FitResult a = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(4));
    std::reverse(data.begin(), data.end());
    FitResult b = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(4));
    REQUIRE(a.amplitude_table.entries.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(testutil::rel_err(b.amplitude_table.entries[i].second, a.amplitude_table.entries[i].second) <= 1e-10);
    CHECK(testutil::rel_err(b.slope, a.slope) <= 1e-10);
    CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("parallel evaluation gives identical results") {
    auto data = small_grid();
    OptimizerConfig opt = few_iterations(3);
    FitResult serial = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, opt);
    opt.threads = 2;
    FitResult parallel = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, opt);
    CHECK(serial.loss_history == parallel.loss_history);
    CHECK(serial.slope == parallel.slope);
}

TEST_CASE("a straight target drives the amplitude toward zero") {
    Dataset ds;
    ds.id = "flat";
    ds.voltage = 4000.0;
    ds.frequency = 2.0;
    for (int k = 0; k <= 20; ++k) {
        ds.trace.timestamps.push_back(0.015 * k);
        ds.trace.sin_theta.push_back(0.0);
    }
    OptimizerConfig opt = few_iterations(8);
    opt.init_amplitude = 0.2;
    FitResult fit = identify({ds}, coarse_mesh(), SimConfig{}, ActuationParams{}, opt);
    CHECK(fit.amplitude_table.entries[0].second < 0.2);
    CHECK(fit.best_loss < fit.loss_history.front());
}

TEST_CASE("loss history is finite and the best iterate is kept") {
    auto data = small_grid();
    std::vector<IterationRecord> seen;
    FitResult fit = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(6),
                             [&](const IterationRecord& r) { seen.push_back(r); });
    CHECK(fit.iterations == 6);
    CHECK(seen.size() == 6);
    double best = std::numeric_limits<double>::infinity();
    for (double l : fit.loss_history) {
        CHECK(std::isfinite(l));
        best = std::min(best, l);
    }
    CHECK(fit.best_loss == best);
    CHECK(fit.train_mae >= 0.0);
    for (const auto& [v, a] : fit.amplitude_table.entries) {
        CHECK(a >= 0.0);
        CHECK(a < 1.0);
    }
}

TEST_CASE("validating on training data reproduces the training error") {
    auto data = small_grid();
    FitResult fit = identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(3));
    ValidationReport rep = validate(fit, data, coarse_mesh(), SimConfig{}, ActuationParams{});
    REQUIRE(rep.per_dataset.size() == fit.per_dataset_mae.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < rep.per_dataset.size(); ++i) {
        const DatasetError* match = nullptr;
        for (const auto& e : fit.per_dataset_mae)
            if (e.id == rep.per_dataset[i].id) match = &e;
        REQUIRE(match != nullptr);
        CHECK(rep.per_dataset[i].mae == match->mae);
        CHECK_FALSE(rep.extrapolated[i]);
        mean += rep.per_dataset[i].mae;
    }
    CHECK(rep.aggregate_mae == doctest::Approx(mean / rep.per_dataset.size()).epsilon(1e-14));
}

TEST_CASE("true parameters give zero validation error") {
    auto data = small_grid();
    FitResult fit;
    fit.amplitude_table = AmplitudeTable{{{3500.0, 0.10}, {5500.0, 0.18}}};
    fit.slope = 8.0;
    ValidationReport rep = validate(fit, data, coarse_mesh(), SimConfig{}, ActuationParams{});
    CHECK(rep.aggregate_mae <= 1e-12);
}

TEST_CASE("input errors name the dataset") {
    auto data = small_grid();
    CHECK_THROWS_AS(identify({}, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(1)), InputError);
    data[1].frequency = 0.0;
    CHECK_THROWS_WITH_AS(identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(1)),
                         doctest::Contains("v5500"), InputError);
    data = small_grid();
    data[1].id = data[0].id;
    CHECK_THROWS_AS(identify(data, coarse_mesh(), SimConfig{}, ActuationParams{}, few_iterations(1)), InputError);
    CHECK_THROWS_AS(validate(FitResult{}, {}, coarse_mesh(), SimConfig{}, ActuationParams{}), InputError);
    OptimizerConfig bad;
    bad.learning_rate_slope = 0.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("synthetic datasets cover two periods") {
    Dataset ds = synthesize_dataset("s", coarse_mesh(), SimConfig{}, drive(0.1, 8.0, 2.0), 4000.0, 100.0);
    CHECK(ds.trace.size() == 101);
    CHECK(ds.trace.timestamps.back() == doctest::Approx(1.0));
    CHECK(ds.frequency == 2.0);
    CHECK(ds.voltage == 4000.0);
    CHECK(ds.trace.sin_theta.front() == 0.0);
}
