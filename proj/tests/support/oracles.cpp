#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

double reward(const Matrix& probs, const std::vector<int>& choices, const OverlapTensor& q, double weight,
              bool ordered) {
  double linear = 0.0;
  double quad = 0.0;
  for (std::size_t n = 0; n < choices.size(); ++n) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const int e_nc = choices[n] == static_cast<int>(c);
      linear += probs(n, c) * e_nc;
      for (std::size_t m = 0; m < choices.size(); ++m) {
        if (m == n) continue;
        for (std::size_t d = 0; d < probs.cols(); ++d) {
          const int e_md = choices[m] == static_cast<int>(d);
          quad += q(n, c, m, d) * e_nc * e_md;
        }
      }
    }
  }
  return linear - weight * (ordered ? quad : quad / 2.0);
}

namespace {

void enumerate(const Matrix& probs, std::size_t n, std::vector<int>& choices, std::vector<bool>& used,
               const std::function<void(const std::vector<int>&)>& visit) {
  if (n == probs.rows()) {
    visit(choices);
    return;
  }
  choices[n] = -1;
  enumerate(probs, n + 1, choices, used, visit);
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    if (used[c]) continue;
    used[c] = true;
    choices[n] = static_cast<int>(c);
    enumerate(probs, n + 1, choices, used, visit);
    used[c] = false;
  }
  choices[n] = -1;
}

}  // namespace

Optimum best_assignment(const Matrix& probs, const OverlapTensor& q, double weight, bool ordered) {
  Optimum best;
  bool first = true;
  std::vector<int> choices(probs.rows(), -1);
  std::vector<bool> used(probs.cols(), false);
  enumerate(probs, 0, choices, used, [&](const std::vector<int>& e) {
    const double r = reward(probs, e, q, weight, ordered);
    if (first || r > best.reward) {
      best = {r, e};
      first = false;
    }
  });
  return best;
}

double max_matching(const Matrix& probs) {
  double best = 0.0;
  std::vector<int> choices(probs.rows(), -1);
  std::vector<bool> used(probs.cols(), false);
  enumerate(probs, 0, choices, used, [&](const std::vector<int>& e) {
    double s = 0.0;
    for (std::size_t n = 0; n < e.size(); ++n) {
      if (e[n] >= 0) s += probs(n, static_cast<std::size_t>(e[n]));
    }
    best = std::max(best, s);
  });
  return best;
}

Matrix policy_probs(const Matrix& params, const Matrix& features) {
  const std::size_t classes = params.rows();
  const std::size_t f = params.cols() - 1;
  Matrix out(features.rows(), classes);
  for (std::size_t n = 0; n < features.rows(); ++n) {
    std::vector<double> z(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = params(c, f);
      for (std::size_t j = 0; j < f; ++j) z[c] += params(c, j) * features(n, j);
    }
    double total = 0.0;
    for (double v : z) total += std::exp(v);
    for (std::size_t c = 0; c < classes; ++c) out(n, c) = std::exp(z[c]) / total;
  }
  return out;
}

Matrix signed_probs(const Matrix& probs, const std::vector<int>& sample, const std::array<bool, 32>& present) {
  Matrix out = probs;
  for (std::size_t n = 0; n < sample.size(); ++n) {
    const int c = sample[n];
    // n wins if no other object that sampled c has a strictly larger p, or an
    // equal p at a lower index.
    bool wins = true;
    for (std::size_t m = 0; m < sample.size(); ++m) {
      if (m == n || sample[m] != c) continue;
      const double pm = probs(m, c), pn = probs(n, c);
      if (pm > pn || (pm == pn && m < n)) wins = false;
    }
    if (!(wins && present[static_cast<std::size_t>(c)])) out(n, c) = -probs(n, c);
  }
  return out;
}

Matrix exact_gradient(const Matrix& params, const Matrix& features,
                      const std::function<double(const std::vector<int>&, const Matrix&)>& reward_of) {
  const Matrix p = policy_probs(params, features);
  const std::size_t n_obj = p.rows(), n_cls = p.cols(), f = params.cols() - 1;
  Matrix grad(params.rows(), params.cols());
  std::vector<int> a(n_obj, 0);
  while (true) {
    double prob = 1.0;
    for (std::size_t n = 0; n < n_obj; ++n) prob *= p(n, static_cast<std::size_t>(a[n]));
    const double r = reward_of(a, p);
    for (std::size_t n = 0; n < n_obj; ++n) {
      for (std::size_t c = 0; c < n_cls; ++c) {
        const double score = (a[n] == static_cast<int>(c) ? 1.0 : 0.0) - p(n, c);
        for (std::size_t j = 0; j < f; ++j) grad(c, j) -= prob * r * score * features(n, j);
        grad(c, f) -= prob * r * score;
      }
    }
    std::size_t k = 0;
    while (k < n_obj && ++a[k] == static_cast<int>(n_cls)) a[k++] = 0;
    if (k == n_obj) break;
  }
  return grad;
}

double ap_from_hits(const std::vector<bool>& ranked_hits, std::size_t positives) {
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_hits.size(); ++i) {
    tp += ranked_hits[i];
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < ranked_hits.size(); ++i) {
    if (!ranked_hits[i]) continue;
    double best = 0.0;
    for (std::size_t j = 0; j < ranked_hits.size(); ++j) {
      if (recall[j] >= recall[i]) best = std::max(best, precision[j]);
    }
    ap += (recall[i] - prev_recall) * best;
    prev_recall = recall[i];
  }
  return ap;
}

double auc_pairs(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

double iou(const deepopg::BinaryMask& a, const deepopg::BinaryMask& b) {
  std::size_t inter = 0, uni = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      inter += a.at(x, y) && b.at(x, y);
      uni += a.at(x, y) || b.at(x, y);
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Instance random_instance(deepopg::Rng& rng, std::size_t objects, std::size_t classes) {
  Instance inst;
  inst.probs = Matrix(objects, classes);
  for (std::size_t n = 0; n < objects; ++n) {
    std::vector<double> w(classes + 1);
    double total = 0.0;
    for (auto& v : w) {
      const double u = rng.uniform();
      v = u < 0.15 ? 0.0 : (u < 0.25 ? 0.5 : -std::log(rng.open_uniform()));
      total += v;
    }
    if (total == 0.0) {
      w[0] = 1.0;
      total = 1.0;
    }
    // The last entry is mass left off the class axis.
    for (std::size_t c = 0; c < classes; ++c) inst.probs(n, c) = w[c] / total;
  }

  const bool per_class = rng.bernoulli(0.4);
  const std::size_t slots = per_class ? objects * classes : objects;
  std::vector<std::uint32_t> slot_of(objects * classes);
  for (std::size_t n = 0; n < objects; ++n) {
    for (std::size_t c = 0; c < classes; ++c) {
      slot_of[n * classes + c] = static_cast<std::uint32_t>(per_class ? n * classes + c : n);
    }
  }
  std::vector<double> table(slots * slots, 0.0);
  for (std::size_t i = 0; i < slots; ++i) {
    table[i * slots + i] = 1.0;
    for (std::size_t j = i + 1; j < slots; ++j) {
      const double u = rng.uniform();
      const double v = u < 0.4 ? 0.0 : (u < 0.5 ? 0.9 : rng.uniform());
      table[i * slots + j] = table[j * slots + i] = v;
    }
  }
  inst.overlap = OverlapTensor(objects, classes, std::move(slot_of), std::move(table));
  return inst;
}

}  // namespace oracle
