#include "spg/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "spg/errors.hpp"
#include "spg/threading.hpp"

namespace spg {

namespace {

/// Fixed-capacity max-heap over squared distances; keeps the k smallest.
class NeighborHeap {
public:
    explicit NeighborHeap(int k) : k_(k) { heap_.reserve(k); }

    double worst() const {
        return heap_.size() < static_cast<std::size_t>(k_)
                   ? std::numeric_limits<double>::infinity()
                   : heap_.front();
    }

    void offer(double d2) {
        if (heap_.size() < static_cast<std::size_t>(k_)) {
            heap_.push_back(d2);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (d2 < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = d2;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    double kth() const { return heap_.front(); }
    bool full() const { return heap_.size() == static_cast<std::size_t>(k_); }

private:
    int k_;
    std::vector<double> heap_;
};

/// Exact k-d tree over the rows of a point matrix; median splits on the
/// widest coordinate, leaves of 16 points.
class KdTree {
public:
    KdTree(const Eigen::MatrixXd& pts) : pts_(pts), index_(pts.rows()) {
        std::iota(index_.begin(), index_.end(), 0);
        nodes_.reserve(static_cast<std::size_t>(pts.rows()) / 8 + 8);
        root_ = build(0, static_cast<int>(pts.rows()));
    }

    /// Squared distance to the k-th nearest neighbor, skipping row
    /// `exclude` (pass -1 to keep all rows).
    double query_kth(const Eigen::RowVectorXd& q, int k, int exclude) const {
        NeighborHeap heap(k);
        search(root_, q, exclude, heap);
        return heap.kth();
    }

private:
    struct Node {
        int begin, end;       // leaf range into index_
        int axis = -1;        // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        Eigen::RowVectorXd lo, hi;  // bounding box
    };

    int build(int begin, int end) {
        Node node;
        node.begin = begin;
        node.end = end;
        node.lo = pts_.row(index_[begin]);
        node.hi = node.lo;
        for (int i = begin + 1; i < end; ++i) {
            node.lo = node.lo.cwiseMin(pts_.row(index_[i]));
            node.hi = node.hi.cwiseMax(pts_.row(index_[i]));
        }
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= 16) return id;

        int axis;
        (node.hi - node.lo).maxCoeff(&axis);
        const int mid = (begin + end) / 2;
        std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                         [&](int a, int b) { return pts_(a, axis) < pts_(b, axis); });
        nodes_[id].axis = axis;
        nodes_[id].split = pts_(index_[mid], axis);
        nodes_[id].left = build(begin, mid);
        nodes_[id].right = build(mid, end);
        return id;
    }

    double box_distance2(const Node& node, const Eigen::RowVectorXd& q) const {
        double d2 = 0.0;
        for (Eigen::Index j = 0; j < q.size(); ++j) {
            double d = 0.0;
            if (q[j] < node.lo[j])
                d = node.lo[j] - q[j];
            else if (q[j] > node.hi[j])
                d = q[j] - node.hi[j];
            d2 += d * d;
        }
        return d2;
    }

    void search(int id, const Eigen::RowVectorXd& q, int exclude, NeighborHeap& heap) const {
        const Node& node = nodes_[id];
        if (heap.full() && box_distance2(node, q) >= heap.worst()) return;
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int row = index_[i];
                if (row == exclude) continue;
                heap.offer((pts_.row(row) - q).squaredNorm());
            }
            return;
        }
        const bool left_first = q[node.axis] < node.split;
        search(left_first ? node.left : node.right, q, exclude, heap);
        search(left_first ? node.right : node.left, q, exclude, heap);
    }

    const Eigen::MatrixXd& pts_;
    std::vector<int> index_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

Eigen::VectorXd brute_force(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& refs, int k,
                            bool same_set) {
    Eigen::VectorXd out(queries.rows());
    parallel_ranges(queries.rows(), 64, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            NeighborHeap heap(k);
            for (Eigen::Index r = 0; r < refs.rows(); ++r) {
                if (same_set && r == i) continue;
                const double d2 = (refs.row(r) - queries.row(i)).squaredNorm();
                if (d2 < heap.worst()) heap.offer(d2);
            }
            out[i] = std::sqrt(heap.kth());
        }
    });
    return out;
}

Eigen::VectorXd tree_search(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& refs, int k,
                            bool same_set) {
    KdTree tree(refs);
    Eigen::VectorXd out(queries.rows());
    parallel_ranges(queries.rows(), 64, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i)
            out[i] = std::sqrt(
                tree.query_kth(queries.row(i), k, same_set ? static_cast<int>(i) : -1));
    });
    return out;
}

void check_args(Eigen::Index n_refs, Eigen::Index dim, int k, bool same_set) {
    if (k < 1) throw ValidationError("knn: k must be >= 1");
    if (dim < 1) throw ValidationError("knn: dimension must be >= 1");
    const Eigen::Index available = same_set ? n_refs - 1 : n_refs;
    if (available < k)
        throw ValidationError("knn: not enough reference points for k=" + std::to_string(k));
}

}  // namespace

Eigen::VectorXd kth_neighbor_within(const Eigen::MatrixXd& points, int k) {
    check_args(points.rows(), points.cols(), k, true);
    if (points.rows() <= kBruteForceLimit) return brute_force(points, points, k, true);
    return tree_search(points, points, k, true);
}

Eigen::VectorXd kth_neighbor_cross(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& refs,
                                   int k) {
    if (queries.cols() != refs.cols())
        throw ValidationError("knn: query/reference dimensions disagree");
    check_args(refs.rows(), refs.cols(), k, false);
    if (refs.rows() <= kBruteForceLimit) return brute_force(queries, refs, k, false);
    return tree_search(queries, refs, k, false);
}

}  // namespace spg
