#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "spg/time_grid.hpp"

namespace spg {

/// An ensemble of sample paths observed on a shared uniform grid.
///
/// Storage is a dense row-major tensor of shape H x (n_steps+1) x dim, path
/// major: entry (i, n, j) sits at ((i * (n_steps+1) + n) * dim + j). Every
/// path's row 0 equals the common initial state. H may be zero (an empty but
/// well-formed ensemble); operations that need paths check their own
/// preconditions.
class PathSet {
public:
    PathSet() = default;

    /// All rows initialized to the initial state.
    PathSet(TimeGrid grid, int dim, Eigen::VectorXd initial_state, int n_paths);

    static PathSet from_data(TimeGrid grid, int dim, Eigen::VectorXd initial_state,
                             std::vector<double> data);

    const TimeGrid& grid() const { return grid_; }
    int dim() const { return dim_; }
    int n_paths() const { return n_paths_; }
    int n_obs() const { return grid_.n_steps + 1; }
    const Eigen::VectorXd& initial_state() const { return initial_state_; }

    double at(int path, int n, int j) const { return data_[index(path, n, j)]; }
    double& at(int path, int n, int j) { return data_[index(path, n, j)]; }

    Eigen::Map<const Eigen::RowVectorXd> state(int path, int n) const {
        return {data_.data() + index(path, n, 0), dim_};
    }
    Eigen::Map<Eigen::RowVectorXd> state(int path, int n) {
        return {data_.data() + index(path, n, 0), dim_};
    }

    /// Cross-section of all paths at grid point n, as an H x dim matrix.
    Eigen::MatrixXd states_at(int n) const;

    const std::vector<double>& data() const { return data_; }

    /// Checks shape consistency, finite entries, and fixed first row.
    void validate() const;

private:
    std::size_t index(int path, int n, int j) const {
        return (static_cast<std::size_t>(path) * static_cast<std::size_t>(n_obs()) +
                static_cast<std::size_t>(n)) *
                   static_cast<std::size_t>(dim_) +
               static_cast<std::size_t>(j);
    }

    TimeGrid grid_;
    int dim_ = 0;
    int n_paths_ = 0;
    Eigen::VectorXd initial_state_;
    std::vector<double> data_;
};

/// Training pairs for one time slot: row i holds the state x^(i)(t_n) and the
/// increment x^(i)(t_{n+1}) - x^(i)(t_n).
struct SlotBatch {
    Eigen::MatrixXd states;      // H x dim
    Eigen::MatrixXd increments;  // H x dim
    int size() const { return static_cast<int>(states.rows()); }
    int dim() const { return static_cast<int>(states.cols()); }
};

/// CSV with header path_id,t_index,x_0,...,x_{d-1}. Values are printed with
/// shortest round-trip formatting, so doubles survive a save/load cycle
/// bit-exactly. The grid is not stored in CSV; supply it when loading.
void save_paths_csv(const PathSet& paths, const std::string& file);
PathSet load_paths_csv(const std::string& file, double t0 = 0.0, double dt = 1.0);

/// Compact little-endian binary: magic "SPG1", u32 H, u32 n_obs, u32 dim,
/// f64 t0, f64 dt, then the tensor in path-major order.
void save_paths_binary(const PathSet& paths, const std::string& file);
PathSet load_paths_binary(const std::string& file);

/// Dispatches on extension: ".csv" for CSV, anything else binary.
void save_paths(const PathSet& paths, const std::string& file);
PathSet load_paths(const std::string& file);

}  // namespace spg
