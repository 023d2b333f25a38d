#include "tg/geometry.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace tg {

double normalize_yaw(double yaw) {
  if (yaw >= -kPi && yaw < kPi) return yaw;
  double y = std::fmod(yaw + kPi, 2.0 * kPi);
  if (y < 0.0) y += 2.0 * kPi;
  y -= kPi;
  if (y >= kPi) y -= 2.0 * kPi;
  return y;
}

std::pair<double, double> rotated_half_widths(const Extents& half, double yaw) {
  double c = std::abs(std::cos(yaw));
  double s = std::abs(std::sin(yaw));
  // Snap the compass directions so rotated boxes keep exact extents.
  if (c < 1e-12) c = 0.0;
  if (s < 1e-12) s = 0.0;
  if (std::abs(c - 1.0) < 1e-12) c = 1.0;
  if (std::abs(s - 1.0) < 1e-12) s = 1.0;
  return {c * half.hx + s * half.hy, s * half.hx + c * half.hy};
}

Rect footprint(const Pose2& pose, const Extents& half) {
  auto [wx, wy] = rotated_half_widths(half, pose.yaw);
  return {pose.x - wx, pose.y - wy, pose.x + wx, pose.y + wy};
}

double point_rect_distance(double x, double y, const Rect& r) {
  double dx = std::max({r.x0 - x, 0.0, x - r.x1});
  double dy = std::max({r.y0 - y, 0.0, y - r.y1});
  return std::hypot(dx, dy);
}

Box box_of(const Pose2& pose, const Extents& half) {
  return {footprint(pose, half), pose.z, pose.z + 2.0 * half.hz};
}

OccupancyGrid::OccupancyGrid(const Rect& area, double resolution) : area_(area), res_(resolution) {
  rows_ = std::max(1, static_cast<int>(std::ceil(area.height() / res_ - 1e-9)));
  cols_ = std::max(1, static_cast<int>(std::ceil(area.width() / res_ - 1e-9)));
  owner_.assign(static_cast<std::size_t>(rows_) * cols_, -1);
}

Rect OccupancyGrid::cell_rect(Cell c) const {
  double x0 = area_.x0 + c.col * res_;
  double y0 = area_.y0 + c.row * res_;
  return {x0, y0, std::min(x0 + res_, area_.x1), std::min(y0 + res_, area_.y1)};
}

std::pair<double, double> OccupancyGrid::cell_center(Cell c) const {
  Rect r = cell_rect(c);
  return {r.cx(), r.cy()};
}

Cell OccupancyGrid::cell_of(double x, double y) const {
  int col = static_cast<int>(std::floor((x - area_.x0) / res_));
  int row = static_cast<int>(std::floor((y - area_.y0) / res_));
  return {std::clamp(row, 0, rows_ - 1), std::clamp(col, 0, cols_ - 1)};
}

std::vector<Cell> OccupancyGrid::cells_overlapping(const Rect& r) const {
  std::vector<Cell> out;
  constexpr double eps = 1e-9;
  int c0 = static_cast<int>(std::floor((r.x0 - area_.x0) / res_ + eps));
  int c1 = static_cast<int>(std::ceil((r.x1 - area_.x0) / res_ - eps)) - 1;
  int r0 = static_cast<int>(std::floor((r.y0 - area_.y0) / res_ + eps));
  int r1 = static_cast<int>(std::ceil((r.y1 - area_.y0) / res_ - eps)) - 1;
  c0 = std::max(c0, 0);
  r0 = std::max(r0, 0);
  c1 = std::min(c1, cols_ - 1);
  r1 = std::min(r1, rows_ - 1);
  for (int row = r0; row <= r1; ++row)
    for (int col = c0; col <= c1; ++col) out.push_back({row, col});
  return out;
}

bool OccupancyGrid::any_blocked(const Rect& r) const {
  for (Cell c : cells_overlapping(r))
    if (blocked(c)) return true;
  return false;
}

void OccupancyGrid::mark(const Rect& r, int id) {
  for (Cell c : cells_overlapping(r)) set_owner(c, id);
}

std::vector<int> bfs_distances(const OccupancyGrid& grid, Cell start,
                               const std::vector<std::uint8_t>* extra_blocked) {
  std::vector<int> dist(grid.size(), -1);
  auto is_blocked = [&](Cell c) {
    return grid.blocked(c) || (extra_blocked && (*extra_blocked)[grid.index(c)]);
  };
  if (!grid.in_bounds(start) || is_blocked(start)) return dist;
  std::deque<Cell> queue{start};
  dist[grid.index(start)] = 0;
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    Cell cur = queue.front();
    queue.pop_front();
    int d = dist[grid.index(cur)];
    for (int k = 0; k < 4; ++k) {
      Cell n{cur.row + dr[k], cur.col + dc[k]};
      if (!grid.in_bounds(n) || is_blocked(n) || dist[grid.index(n)] >= 0) continue;
      dist[grid.index(n)] = d + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

std::vector<Cell> bfs_path(const OccupancyGrid& grid, Cell start, Cell goal) {
  if (!grid.in_bounds(start) || !grid.in_bounds(goal)) return {};
  if (start == goal) return {start};
  std::vector<int> dist = bfs_distances(grid, goal);
  if (dist[grid.index(start)] < 0) return {};
  // Walk downhill from start; neighbour order fixes the path deterministically.
  std::vector<Cell> path{start};
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  Cell cur = start;
  while (!(cur == goal)) {
    int d = dist[grid.index(cur)];
    for (int k = 0; k < 4; ++k) {
      Cell n{cur.row + dr[k], cur.col + dc[k]};
      if (grid.in_bounds(n) && dist[grid.index(n)] == d - 1) {
        cur = n;
        break;
      }
    }
    path.push_back(cur);
  }
  return path;
}

std::optional<Cell> nearest_free_to_center(const OccupancyGrid& grid) {
  std::optional<Cell> best;
  double best_d = std::numeric_limits<double>::infinity();
  double cx = grid.area().cx();
  double cy = grid.area().cy();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Cell c = grid.cell_at(i);
    if (grid.blocked(c)) continue;
    auto [x, y] = grid.cell_center(c);
    double d = std::hypot(x - cx, y - cy);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace tg
