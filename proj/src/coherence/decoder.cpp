#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "deepopg/coherence.hpp"

namespace deepopg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Maximum total weight of a matching between rows and columns where every
/// row may also stay unmatched. Weights must be non-negative. Shortest
/// augmenting path Hungarian method on the negated weights, with one zero
/// dummy column per row.
double max_weight_matching(const std::vector<double>& w, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) return 0.0;
  const std::size_t m = cols + rows;
  auto cost = [&](std::size_t i, std::size_t j) { return j < cols ? -w[i * cols + j] : 0.0; };
  std::vector<double> u(rows + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> done(m + 1);
  for (std::size_t i = 1; i <= rows; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    do {
      done[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (done[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (done[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= cols; ++j) {
    if (p[j] != 0) total += w[(p[j] - 1) * cols + (j - 1)];
  }
  return total;
}

class BranchAndBound {
 public:
  BranchAndBound(const Matrix& probs, const OverlapTensor& overlap, const DecoderConfig& config)
      : probs_(probs), overlap_(overlap), config_(config), factor_(config.pair_factor()) {
    const std::size_t n_obj = probs.rows();
    const std::size_t k = static_cast<std::size_t>(config.candidate_classes_per_object);

    std::vector<std::vector<int>> cands(n_obj);
    std::vector<double> best_p(n_obj, 0.0);
    for (std::size_t n = 0; n < n_obj; ++n) {
      std::vector<int> cls;
      for (std::size_t c = 0; c < probs.cols(); ++c) {
        if (probs(n, c) > 0.0) cls.push_back(static_cast<int>(c));
      }
      std::stable_sort(cls.begin(), cls.end(),
                       [&](int a, int b) { return probs(n, a) > probs(n, b); });
      if (cls.size() > k) cls.resize(k);
      if (!cls.empty()) best_p[n] = probs(n, cls.front());
      cands[n] = std::move(cls);
    }
    for (std::size_t n = 0; n < n_obj; ++n) {
      if (!cands[n].empty()) order_.push_back(n);
    }
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return best_p[a] > best_p[b]; });
    for (std::size_t n : order_) cand_.push_back(std::move(cands[n]));
    build_clusters();

    pen_.resize(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) pen_[i].assign(cand_[i].size(), 0.0);
    used_.assign(probs.cols(), 0);
    choices_.assign(n_obj, Assignment::kNone);
    best_choices_ = choices_;
    best_reward_ = dcr_reward_for_choices(probs_, best_choices_, overlap_, config_);
    if (config.time_budget) deadline_ = std::chrono::steady_clock::now() + *config.time_budget;
  }

  void run() {
    seed_greedy();
    search(0, 0.0);
  }

  const std::vector<int>& best() const { return best_choices_; }
  bool budget_exceeded() const { return budget_exceeded_; }
  std::size_t nodes() const { return nodes_; }

 private:
  double slack() const { return 1e-9 * (1.0 + std::abs(best_reward_)); }

  void offer(const std::vector<int>& choices) {
    const double r = dcr_reward_for_choices(probs_, choices, overlap_, config_);
    if (r > best_reward_ || (r == best_reward_ && tie_break_prefers(choices, best_choices_))) {
      best_reward_ = r;
      best_choices_ = choices;
    }
  }

  void seed_greedy() {
    std::vector<int> choices(probs_.rows(), Assignment::kNone);
    std::vector<char> used(probs_.cols(), 0);
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const std::size_t n = order_[i];
      double best_gain = 0.0;
      int best_cls = Assignment::kNone;
      for (int c : cand_[i]) {
        if (used[c]) continue;
        double gain = probs_(n, c);
        for (std::size_t j = 0; j < i; ++j) {
          const std::size_t m = order_[j];
          if (choices[m] != Assignment::kNone) gain -= factor_ * overlap_(n, c, m, choices[m]);
        }
        if (gain > best_gain) {
          best_gain = gain;
          best_cls = c;
        }
      }
      if (best_cls != Assignment::kNone) {
        choices[n] = best_cls;
        used[best_cls] = 1;
      }
    }
    offer(choices);
  }

  // Objects i and j conflict when assigning both can never beat assigning
  // only the better of the two: the pair's smallest overlap penalty is at
  // least the smaller of their best probabilities. Within a group of
  // pairwise-conflicting objects at most one counts toward a bound.
  void build_clusters() {
    const std::size_t n = order_.size();
    auto conflict = [&](std::size_t i, std::size_t j) {
      if (factor_ <= 0.0) return false;
      double qmin = kInf;
      for (int c : cand_[i]) {
        for (int d : cand_[j]) qmin = std::min(qmin, overlap_(order_[i], c, order_[j], d));
      }
      const double pi = probs_(order_[i], cand_[i].front());
      const double pj = probs_(order_[j], cand_[j].front());
      return factor_ * qmin >= std::min(pi, pj);
    };
    for (std::size_t i = 0; i < n; ++i) {
      bool placed = false;
      for (auto& members : clusters_) {
        if (std::all_of(members.begin(), members.end(), [&](std::size_t j) { return conflict(i, j); })) {
          members.push_back(i);
          placed = true;
          break;
        }
      }
      if (!placed) clusters_.push_back({i});
    }
  }

  double optimistic_rest(std::size_t depth) const {
    double total = 0.0;
    for (const auto& members : clusters_) {
      double best = 0.0;
      for (std::size_t i : members) {
        if (i < depth) continue;
        for (std::size_t j = 0; j < cand_[i].size(); ++j) {
          if (used_[cand_[i][j]]) continue;
          best = std::max(best, probs_(order_[i], cand_[i][j]) - pen_[i][j]);
        }
      }
      total += best;
    }
    return total;
  }

  double matching_rest(std::size_t depth) const {
    std::vector<int> cols;
    for (std::size_t i = depth; i < order_.size(); ++i) {
      for (int c : cand_[i]) {
        if (!used_[c]) cols.push_back(c);
      }
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    std::vector<double> w;
    std::size_t rows = 0;
    for (const auto& members : clusters_) {
      if (members.back() < depth) continue;
      w.resize(w.size() + cols.size(), 0.0);
      double* row = w.data() + rows * cols.size();
      ++rows;
      for (std::size_t i : members) {
        if (i < depth) continue;
        for (std::size_t j = 0; j < cand_[i].size(); ++j) {
          const int c = cand_[i][j];
          if (used_[c]) continue;
          const auto col = static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), c) - cols.begin());
          row[col] = std::max(row[col], probs_(order_[i], c) - pen_[i][j]);
        }
      }
    }
    if (w.empty()) return 0.0;
    if (rows == 1) return std::max(0.0, *std::max_element(w.begin(), w.end()));
    return max_weight_matching(w, rows, cols.size());
  }

  bool out_of_time() {
    if (!deadline_ || budget_exceeded_) return budget_exceeded_;
    if ((nodes_ & 1023) == 0 && std::chrono::steady_clock::now() >= *deadline_) budget_exceeded_ = true;
    return budget_exceeded_;
  }

  void place(std::size_t depth, int cls, double sign) {
    const std::size_t n = order_[depth];
    for (std::size_t i = depth + 1; i < order_.size(); ++i) {
      const std::size_t m = order_[i];
      for (std::size_t j = 0; j < cand_[i].size(); ++j) {
        pen_[i][j] += sign * factor_ * overlap_(m, cand_[i][j], n, cls);
      }
    }
  }

  void search(std::size_t depth, double partial) {
    ++nodes_;
    if (out_of_time()) return;
    if (depth == order_.size()) {
      offer(choices_);
      return;
    }
    if (partial + optimistic_rest(depth) < best_reward_ - slack()) return;
    if (partial + matching_rest(depth) < best_reward_ - slack()) return;

    // Children: free candidates by decreasing net gain, then suppression.
    std::vector<std::pair<double, std::size_t>> kids;
    for (std::size_t j = 0; j < cand_[depth].size(); ++j) {
      if (used_[cand_[depth][j]]) continue;
      kids.emplace_back(probs_(order_[depth], cand_[depth][j]) - pen_[depth][j], j);
    }
    std::stable_sort(kids.begin(), kids.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const std::size_t n = order_[depth];
    for (const auto& [gain, j] : kids) {
      const int c = cand_[depth][j];
      choices_[n] = c;
      used_[c] = 1;
      place(depth, c, +1.0);
      search(depth + 1, partial + gain);
      place(depth, c, -1.0);
      used_[c] = 0;
      choices_[n] = Assignment::kNone;
      if (budget_exceeded_) return;
    }
    search(depth + 1, partial);
  }

  const Matrix& probs_;
  const OverlapTensor& overlap_;
  const DecoderConfig& config_;
  const double factor_;

  std::vector<std::size_t> order_;
  std::vector<std::vector<int>> cand_;
  std::vector<std::vector<std::size_t>> clusters_;
  std::vector<std::vector<double>> pen_;
  std::vector<char> used_;
  std::vector<int> choices_;
  std::vector<int> best_choices_;
  double best_reward_ = 0.0;
  std::size_t nodes_ = 0;
  std::optional<std::chrono::steady_clock::time_point> deadline_;
  bool budget_exceeded_ = false;
};

}  // namespace

DecodeResult decode_assignment(const Matrix& probs, const OverlapTensor& overlap,
                               const DecoderConfig& config) {
  config.validate();
  if (overlap.objects() != probs.rows() || overlap.classes() != probs.cols()) {
    throw DimensionError("overlap tensor does not match the probability matrix");
  }
  validate_probability_rows(probs);

  BranchAndBound bnb(probs, overlap, config);
  bnb.run();

  DecodeResult result;
  result.assignment = Assignment::from_choices(probs.cols(), bnb.best());
  result.reward = dcr_reward(probs, result.assignment, overlap, config);
  result.suppressed = result.assignment.suppressed();
  result.optimality = bnb.budget_exceeded() ? Optimality::kBudgetExceeded : Optimality::kProven;
  result.nodes_explored = bnb.nodes();
  return result;
}

}  // namespace deepopg
