#pragma once
// Brute-force planar placement: enumerate every (cell, yaw), check the hard
// constraints with a private flood fill, take the best score.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include "tg/factory.hpp"

namespace oracle {

struct Grid {
  double x0, y0, res;
  int rows, cols;
  std::vector<bool> blocked;  // row-major
};

inline Grid from(const tg::OccupancyGrid& g) {
  Grid o{g.area().x0, g.area().y0, g.resolution(), g.rows(), g.cols(), {}};
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) o.blocked.push_back(g.blocked({r, c}));
  return o;
}

// Cells that could touch the rect, padded by one so the exact overlap test
// below still decides every boundary case.
inline std::array<int, 4> window(const Grid& g, double fx0, double fy0, double fx1, double fy1) {
  auto lo = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v)) - 1, 0, n); };
  auto hi = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v)) + 1, 0, n); };
  return {lo((fy0 - g.y0) / g.res, g.rows), hi((fy1 - g.y0) / g.res, g.rows), lo((fx0 - g.x0) / g.res, g.cols),
          hi((fx1 - g.x0) / g.res, g.cols)};
}

inline std::optional<tg::Pose2> best_pose(const tg::OccupancyGrid& tg_grid, const tg::Extents& h,
                                          const std::vector<tg::PlanarConstraint>& cons, tg::Cell spawn) {
  Grid g = from(tg_grid);
  const double x1 = tg_grid.area().x1, y1 = tg_grid.area().y1;
  struct C {
    long long key;
    int r, c, k;
    double x, y, yaw, fx0, fy0, fx1, fy1;
  };
  std::vector<C> all;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      for (int k = 0; k < 8; ++k) {
        double x = g.x0 + (c + 0.5) * g.res, y = g.y0 + (r + 0.5) * g.res;
        double yaw = k < 4 ? k * M_PI / 4 : (k - 8) * M_PI / 4;
        double cs = std::fabs(std::cos(yaw)), sn = std::fabs(std::sin(yaw));
        if (cs < 1e-12) cs = 0;
        if (sn < 1e-12) sn = 0;
        double hx = h.hx * cs + h.hy * sn, hy = h.hx * sn + h.hy * cs;
        double fx0 = x - hx, fx1 = x + hx, fy0 = y - hy, fy1 = y + hy;
        if (fx0 < g.x0 - 1e-9 || fy0 < g.y0 - 1e-9 || fx1 > x1 + 1e-9 || fy1 > y1 + 1e-9) continue;
        bool ok = true;
        auto [r0, r1, c0, c1] = window(g, fx0, fy0, fx1, fy1);
        for (int rr = r0; rr < r1 && ok; ++rr)
          for (int cc = c0; cc < c1 && ok; ++cc) {
            double cx0 = g.x0 + cc * g.res, cy0 = g.y0 + rr * g.res;
            bool ov = cx0 < fx1 - 1e-9 && fx0 < cx0 + g.res - 1e-9 && cy0 < fy1 - 1e-9 && fy0 < cy0 + g.res - 1e-9;
            if (ov && (g.blocked[rr * g.cols + cc] || (rr == spawn.row && cc == spawn.col))) ok = false;
          }
        if (!ok) continue;
        double score = 0;
        for (const auto& con : cons) {
          double dx = con.ref_x - x, dy = con.ref_y - y, d = std::sqrt(dx * dx + dy * dy), s = 0;
          if (con.kind == tg::PlanarConstraint::Kind::NextTo) s = d <= 0.5 ? 1 : std::exp(-(d - 0.5));
          if (con.kind == tg::PlanarConstraint::Kind::FaceTo) s = d < 1e-9 ? 0 : std::max(0.0, std::cos(yaw - std::atan2(dy, dx)));
          if (con.kind == tg::PlanarConstraint::Kind::AlignedWith) {
            double m = std::fmod(std::fabs(yaw - con.ref_yaw), M_PI);
            s = (m <= M_PI / 12 + 1e-9 || m >= M_PI - M_PI / 12 - 1e-9) ? 1 : 0;
          }
          score += con.weight * s;
        }
        all.push_back({std::llround(score * 1e9), r, c, k, x, y, yaw, fx0, fy0, fx1, fy1});
      }
  // Walk candidates best-first; the first that passes reachability is the argmax.
  std::optional<C> best;
  for (const auto& cand : all) {
    if (best && (cand.key < best->key ||
                 (cand.key == best->key && std::tie(cand.r, cand.c, cand.k) > std::tie(best->r, best->c, best->k))))
      continue;
    std::vector<bool> occ = g.blocked;
    auto [r0, r1, c0, c1] = window(g, cand.fx0, cand.fy0, cand.fx1, cand.fy1);
    for (int rr = r0; rr < r1; ++rr)
      for (int cc = c0; cc < c1; ++cc) {
        double cx0 = g.x0 + cc * g.res, cy0 = g.y0 + rr * g.res;
        if (cx0 < cand.fx1 - 1e-9 && cand.fx0 < cx0 + g.res - 1e-9 && cy0 < cand.fy1 - 1e-9 && cand.fy0 < cy0 + g.res - 1e-9)
          occ[rr * g.cols + cc] = true;
      }
    std::vector<bool> seen(occ.size(), false);
    std::deque<int> q;
    q.push_back(spawn.row * g.cols + spawn.col);
    seen[q.front()] = true;
    const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
    while (!q.empty()) {
      int i = q.front();
      q.pop_front();
      int r = i / g.cols, c = i % g.cols;
      for (int d = 0; d < 4; ++d) {
        int nr = r + dr[d], nc = c + dc[d];
        if (nr < 0 || nc < 0 || nr >= g.rows || nc >= g.cols) continue;
        int j = nr * g.cols + nc;
        if (seen[j] || occ[j]) continue;
        seen[j] = true;
        q.push_back(j);
      }
    }
    // Some reached cell must touch a footprint cell.
    bool reach = false;
    for (int i = 0; i < static_cast<int>(occ.size()) && !reach; ++i) {
      if (!seen[i]) continue;
      int r = i / g.cols, c = i % g.cols;
      for (int d = 0; d < 4; ++d) {
        int nr = r + dr[d], nc = c + dc[d];
        if (nr < 0 || nc < 0 || nr >= g.rows || nc >= g.cols) continue;
        if (occ[nr * g.cols + nc] && !g.blocked[nr * g.cols + nc]) reach = true;
      }
    }
    if (reach) best = cand;
  }
  if (!best) return std::nullopt;
  return tg::Pose2{best->x, best->y, 0.0, best->yaw};
}

}  // namespace oracle
