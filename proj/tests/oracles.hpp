#pragma once

// Independent reference implementations used only by the tests. They share
// no code with the library beyond plain data containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

namespace oracle {

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = -INFINITY;
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::isinf(x[i]) && x[i] < 0 ? 0.0 : std::exp(x[i] - mx);
    z += e[i];
  }
  for (auto& v : e) v /= z;
  return e;
}

using Mat = std::vector<std::vector<double>>;

inline Mat affine(const Mat& x, const std::vector<double>& w, const std::vector<double>& b,
                  std::size_t in, std::size_t out) {
  Mat y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r][i] * w[i * out + o];
      y[r][o] = s;
    }
  return y;
}

// Single-head scaled dot-product attention; `allowed[n][l]` masks context rows.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v,
                     const std::vector<std::vector<bool>>* allowed = nullptr) {
  const std::size_t d = q.empty() ? 0 : q[0].size();
  Mat out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t n = 0; n < q.size(); ++n) {
    std::vector<double> logits(k.size());
    for (std::size_t l = 0; l < k.size(); ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += q[n][j] * k[l][j];
      logits[l] = s / std::sqrt(static_cast<double>(d));
      if (allowed && !(*allowed)[n][l]) logits[l] = -INFINITY;
    }
    const auto w = softmax(logits);
    for (std::size_t l = 0; l < k.size(); ++l)
      for (std::size_t j = 0; j < v[l].size(); ++j) out[n][j] += w[l] * v[l][j];
  }
  return out;
}

// Pixel-set form of the mask metrics.
inline std::set<std::size_t> on_pixels(const std::vector<std::uint8_t>& m) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) s.insert(i);
  return s;
}

inline double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  const auto sa = on_pixels(a), sb = on_pixels(b);
  std::vector<std::size_t> inter, uni;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double fscore(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
                     double beta2 = 0.3) {
  const auto sp = on_pixels(pred), st = on_pixels(truth);
  if (sp.empty() && st.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(sp.begin(), sp.end(), st.begin(), st.end(), std::back_inserter(inter));
  if (inter.empty()) return 0.0;
  const double p = static_cast<double>(inter.size()) / static_cast<double>(sp.size());
  const double r = static_cast<double>(inter.size()) / static_cast<double>(st.size());
  return (1.0 + beta2) * p * r / (beta2 * p + r);
}

inline double ciou(const std::vector<double>& ious, double threshold) {
  std::size_t hit = 0;
  for (double v : ious) hit += v >= threshold ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ious.size());
}

inline double auc(const std::vector<double>& ious) {
  // Thresholds i / 20 written out explicitly, trapezoids summed in order.
  std::vector<double> ys;
  for (int i = 0; i <= 20; ++i) ys.push_back(ciou(ious, i / 20.0));
  double a = 0.0;
  for (int i = 0; i < 20; ++i) a += 0.05 * (ys[i] + ys[i + 1]) / 2.0;
  return a;
}

}  // namespace oracle
