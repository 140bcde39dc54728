#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>

#include "lidarseg/classifiers.hpp"
#include "lidarseg/error.hpp"

namespace lidarseg::classifiers {

namespace {

using Counts = std::array<std::size_t, kNumLabeledClasses>;

double gini_sum(const Counts& c, std::size_t n) {
    // n * gini, which keeps the weighted child impurity a plain sum.
    if (n == 0) return 0.0;
    double sq = 0.0;
    for (std::size_t k : c) sq += static_cast<double>(k) * static_cast<double>(k);
    return static_cast<double>(n) - sq / static_cast<double>(n);
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(const TrainingSet& data, int max_depth, std::size_t min_leaf)
        : data_(data), max_depth_(max_depth), min_leaf_(min_leaf) {
        for (const FeatureRow& r : data.rows) x_.push_back(r.features.to_array());
    }

    DecisionTree build() {
        std::vector<std::size_t> all(data_.size());
        std::iota(all.begin(), all.end(), 0);
        grow(all, 0);
        return std::move(tree_);
    }

private:
    int grow(const std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        Counts counts{};
        for (std::size_t r : rows) ++counts[index_of(data_.rows[r].cls)];
        {
            TreeNode& node = tree_.nodes[id];
            std::size_t best = 0;
            for (std::size_t k = 0; k < kNumLabeledClasses; ++k) {
                node.probabilities[k] = static_cast<double>(counts[k]) / static_cast<double>(rows.size());
                if (counts[k] > counts[best]) best = k;
            }
            node.cls = static_cast<PointClass>(best);
        }
        const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
        if (pure || depth >= max_depth_ || rows.size() < 2 * min_leaf_) return id;

        const Split split = best_split(rows, counts);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) (x_[r][split.feature] <= split.threshold ? left : right).push_back(r);
        const int l = grow(left, depth + 1);
        const int rr = grow(right, depth + 1);
        TreeNode& node = tree_.nodes[id];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = rr;
        return id;
    }

    Split best_split(const std::vector<std::size_t>& rows, const Counts& total) const {
        Split best;
        const std::size_t n = rows.size();
        std::vector<std::size_t> sorted = rows;
        for (int f = 0; f < static_cast<int>(FeatureVector::kSize); ++f) {
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
            Counts left{};
            for (std::size_t i = 0; i + 1 < n; ++i) {
                ++left[index_of(data_.rows[sorted[i]].cls)];
                const double lo = x_[sorted[i]][f];
                const double hi = x_[sorted[i + 1]][f];
                if (!(lo < hi)) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < min_leaf_ || nr < min_leaf_) continue;
                Counts right{};
                for (std::size_t k = 0; k < kNumLabeledClasses; ++k) right[k] = total[k] - left[k];
                const double impurity = gini_sum(left, nl) + gini_sum(right, nr);
                // Strict improvement keeps the lowest feature, then the lowest threshold.
                if (impurity < best.impurity) {
                    double mid = lo + 0.5 * (hi - lo);
                    if (!(mid < hi)) mid = lo;
                    best = {f, mid, impurity};
                }
            }
        }
        return best;
    }

    const TrainingSet& data_;
    int max_depth_;
    std::size_t min_leaf_;
    std::vector<FeatureArray> x_;
    DecisionTree tree_;
};

}  // namespace

const TreeNode& DecisionTree::leaf_for(const FeatureArray& x) const {
    if (nodes.empty()) throw Error(ErrorCode::Argument, "predict: empty decision tree");
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) node = &nodes[x[node->feature] <= node->threshold ? node->left : node->right];
    return *node;
}

int DecisionTree::depth() const {
    if (nodes.empty()) return 0;
    std::function<int(int)> walk = [&](int id) -> int {
        const TreeNode& n = nodes[id];
        return n.is_leaf() ? 0 : 1 + std::max(walk(n.left), walk(n.right));
    };
    return walk(0);
}

DecisionTree train_tree(const TrainingSet& data, int max_depth, std::size_t min_leaf) {
    if (data.empty()) throw Error(ErrorCode::EmptyData, "train_tree: empty training set");
    if (max_depth < 0) throw Error(ErrorCode::Argument, "train_tree: max_depth must be >= 0");
    if (min_leaf < 1) throw Error(ErrorCode::Argument, "train_tree: min_leaf must be >= 1");
    return TreeBuilder(data, max_depth, min_leaf).build();
}

}  // namespace lidarseg::classifiers
