#include "spg/path_set.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "spg/errors.hpp"

namespace spg {

PathSet::PathSet(TimeGrid grid, int dim, Eigen::VectorXd initial_state, int n_paths)
    : grid_(grid), dim_(dim), n_paths_(n_paths), initial_state_(std::move(initial_state)) {
    grid_.validate();
    if (dim_ < 1) throw ValidationError("PathSet: dim must be >= 1");
    if (n_paths_ < 0) throw ValidationError("PathSet: n_paths must be >= 0");
    if (initial_state_.size() != dim_)
        throw ValidationError("PathSet: initial_state size does not match dim");
    data_.resize(static_cast<std::size_t>(n_paths_) * n_obs() * dim_);
    for (int i = 0; i < n_paths_; ++i)
        for (int n = 0; n < n_obs(); ++n)
            for (int j = 0; j < dim_; ++j) data_[index(i, n, j)] = initial_state_[j];
}

PathSet PathSet::from_data(TimeGrid grid, int dim, Eigen::VectorXd initial_state,
                           std::vector<double> data) {
    grid.validate();
    if (dim < 1) throw ValidationError("PathSet: dim must be >= 1");
    const std::size_t per_path =
        static_cast<std::size_t>(grid.n_steps + 1) * static_cast<std::size_t>(dim);
    if (per_path == 0 || data.size() % per_path != 0)
        throw ValidationError("PathSet: data size inconsistent with grid and dim");
    PathSet out;
    out.grid_ = grid;
    out.dim_ = dim;
    out.n_paths_ = static_cast<int>(data.size() / per_path);
    out.initial_state_ = std::move(initial_state);
    if (out.initial_state_.size() != dim)
        throw ValidationError("PathSet: initial_state size does not match dim");
    out.data_ = std::move(data);
    return out;
}

Eigen::MatrixXd PathSet::states_at(int n) const {
    if (n < 0 || n >= n_obs()) throw ValidationError("PathSet: grid index out of range");
    Eigen::MatrixXd m(n_paths_, dim_);
    for (int i = 0; i < n_paths_; ++i) m.row(i) = state(i, n);
    return m;
}

void PathSet::validate() const {
    grid_.validate();
    if (dim_ < 1) throw ValidationError("PathSet: dim must be >= 1");
    for (int i = 0; i < n_paths_; ++i)
        for (int j = 0; j < dim_; ++j)
            if (at(i, 0, j) != initial_state_[j])
                throw ValidationError("PathSet: path " + std::to_string(i) +
                                      " does not start at the initial state");
    for (double v : data_)
        if (!std::isfinite(v)) throw ValidationError("PathSet: non-finite entry");
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("paths csv: bad number '" + std::string(s) + "' on line " +
                      std::to_string(line_no));
    return v;
}

}  // namespace

void save_paths_csv(const PathSet& paths, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + file);
    std::string line = "path_id,t_index";
    for (int j = 0; j < paths.dim(); ++j) line += ",x_" + std::to_string(j);
    line += "\n";
    out << line;
    for (int i = 0; i < paths.n_paths(); ++i) {
        for (int n = 0; n < paths.n_obs(); ++n) {
            line.clear();
            line += std::to_string(i);
            line += ',';
            line += std::to_string(n);
            for (int j = 0; j < paths.dim(); ++j) {
                line += ',';
                append_double(line, paths.at(i, n, j));
            }
            line += '\n';
            out << line;
        }
    }
    if (!out) throw IoError("write failed: " + file);
}

PathSet load_paths_csv(const std::string& file, double t0, double dt) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open: " + file);
    std::string header;
    if (!std::getline(in, header)) throw IoError("paths csv: empty file: " + file);
    if (header.rfind("path_id,t_index", 0) != 0)
        throw IoError("paths csv: unexpected header in " + file);
    int dim = -1;
    for (char c : header)
        if (c == ',') ++dim;
    if (dim < 1) throw IoError("paths csv: no coordinate columns in " + file);

    std::vector<double> data;
    std::vector<std::string_view> fields;
    std::string line;
    std::size_t line_no = 1;
    int first_path_rows = 0;
    bool in_first_path = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        fields.clear();
        std::string_view rest(line);
        for (;;) {
            const std::size_t pos = rest.find(',');
            fields.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (static_cast<int>(fields.size()) != dim + 2)
            throw IoError("paths csv: wrong field count on line " + std::to_string(line_no));
        if (in_first_path) {
            if (fields[0] == "0")
                ++first_path_rows;
            else
                in_first_path = false;
        }
        for (int j = 0; j < dim; ++j) data.push_back(parse_double(fields[2 + j], line_no));
    }
    if (first_path_rows < 2)
        throw IoError("paths csv: fewer than two observations per path in " + file);
    TimeGrid grid{t0, dt, first_path_rows - 1};
    const std::size_t per_path = static_cast<std::size_t>(first_path_rows) * dim;
    if (data.size() % per_path != 0)
        throw IoError("paths csv: ragged path blocks in " + file);
    Eigen::VectorXd x0(dim);
    for (int j = 0; j < dim; ++j) x0[j] = data[static_cast<std::size_t>(j)];
    return PathSet::from_data(grid, dim, std::move(x0), std::move(data));
}

namespace {

constexpr char kMagic[4] = {'S', 'P', 'G', '1'};

template <typename T>
void write_raw(std::ofstream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& file) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated path file: " + file);
    return v;
}

}  // namespace

void save_paths_binary(const PathSet& paths, const std::string& file) {
    static_assert(std::endian::native == std::endian::little,
                  "binary path format assumes a little-endian host");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + file);
    out.write(kMagic, 4);
    write_raw(out, static_cast<std::uint32_t>(paths.n_paths()));
    write_raw(out, static_cast<std::uint32_t>(paths.n_obs()));
    write_raw(out, static_cast<std::uint32_t>(paths.dim()));
    write_raw(out, paths.grid().t0);
    write_raw(out, paths.grid().dt);
    out.write(reinterpret_cast<const char*>(paths.data().data()),
              static_cast<std::streamsize>(paths.data().size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + file);
}

PathSet load_paths_binary(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open: " + file);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a path file (bad magic): " + file);
    const auto h = read_raw<std::uint32_t>(in, file);
    const auto n_obs = read_raw<std::uint32_t>(in, file);
    const auto dim = read_raw<std::uint32_t>(in, file);
    const auto t0 = read_raw<double>(in, file);
    const auto dt = read_raw<double>(in, file);
    if (n_obs < 2 || dim < 1) throw IoError("corrupt path file header: " + file);
    std::vector<double> data(static_cast<std::size_t>(h) * n_obs * dim);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw IoError("truncated path file: " + file);
    TimeGrid grid{t0, dt, static_cast<int>(n_obs) - 1};
    Eigen::VectorXd x0(static_cast<int>(dim));
    for (std::uint32_t j = 0; j < dim; ++j)
        x0[static_cast<int>(j)] = h > 0 ? data[j] : 0.0;
    return PathSet::from_data(grid, static_cast<int>(dim), std::move(x0), std::move(data));
}

namespace {
bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

void save_paths(const PathSet& paths, const std::string& file) {
    if (has_suffix(file, ".csv"))
        save_paths_csv(paths, file);
    else
        save_paths_binary(paths, file);
}

PathSet load_paths(const std::string& file) {
    if (has_suffix(file, ".csv")) return load_paths_csv(file);
    return load_paths_binary(file);
}

}  // namespace spg
