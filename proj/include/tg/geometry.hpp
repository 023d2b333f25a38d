#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace tg {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into [-pi, pi).
double normalize_yaw(double yaw);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // support height, 0 on the floor
  double yaw = 0.0;

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

struct Extents {
  double hx = 0.0;
  double hy = 0.0;
  double hz = 0.0;

  friend bool operator==(const Extents&, const Extents&) = default;
};

/// Axis-aligned rectangle in the floor plane.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool valid() const { return x1 > x0 && y1 > y0; }

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  /// `other` lies inside this rect, allowing `eps` slack on every side.
  bool contains(const Rect& other, double eps = 1e-9) const {
    return other.x0 >= x0 - eps && other.y0 >= y0 - eps && other.x1 <= x1 + eps &&
           other.y1 <= y1 + eps;
  }
  /// Interiors intersect; touching edges do not count.
  bool overlaps(const Rect& other, double eps = 1e-9) const {
    return x0 < other.x1 - eps && other.x0 < x1 - eps && y0 < other.y1 - eps &&
           other.y0 < y1 - eps;
  }
  Rect shrunk(double d) const { return {x0 + d, y0 + d, x1 - d, y1 - d}; }
  Rect dilated(double d) const { return {x0 - d, y0 - d, x1 + d, y1 + d}; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Half widths of the axis-aligned bounding box of a box rotated by `yaw`.
std::pair<double, double> rotated_half_widths(const Extents& half, double yaw);

/// Floor-plane AABB of a box at `pose`.
Rect footprint(const Pose2& pose, const Extents& half);

double point_rect_distance(double x, double y, const Rect& r);

/// 3-D AABB, used for collision checks.
struct Box {
  Rect base;
  double z0 = 0.0;
  double z1 = 0.0;

  bool overlaps(const Box& other, double eps = 1e-9) const {
    return base.overlaps(other.base, eps) && z0 < other.z1 - eps && other.z0 < z1 - eps;
  }
};

Box box_of(const Pose2& pose, const Extents& half);

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Boolean occupancy over a rectangle at fixed resolution, with the id of the
/// object blocking each cell (-1 when free).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Rect& area, double resolution);

  const Rect& area() const { return area_; }
  double resolution() const { return res_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return owner_.size(); }

  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols_ + c.col; }
  Cell cell_at(std::size_t idx) const {
    return {static_cast<int>(idx / cols_), static_cast<int>(idx % cols_)};
  }

  bool blocked(Cell c) const { return owner_[index(c)] >= 0; }
  int owner(Cell c) const { return owner_[index(c)]; }
  void set_owner(Cell c, int id) { owner_[index(c)] = id; }

  Rect cell_rect(Cell c) const;
  std::pair<double, double> cell_center(Cell c) const;
  /// Cell containing the point, clamped to the grid.
  Cell cell_of(double x, double y) const;

  /// Cells whose square overlaps `r` (strict interior overlap).
  std::vector<Cell> cells_overlapping(const Rect& r) const;
  bool any_blocked(const Rect& r) const;
  void mark(const Rect& r, int id);

 private:
  Rect area_{};
  double res_ = 0.1;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> owner_;
};

/// 4-connected breadth-first distances over free cells; -1 marks unreachable.
/// `extra_blocked`, when given, is treated as occupied on top of the grid.
std::vector<int> bfs_distances(const OccupancyGrid& grid, Cell start,
                               const std::vector<std::uint8_t>* extra_blocked = nullptr);

/// Shortest 4-connected path from `start` to `goal` (inclusive), empty if none.
std::vector<Cell> bfs_path(const OccupancyGrid& grid, Cell start, Cell goal);

/// Free cell whose centre is nearest the grid centre; ties by (row, col).
std::optional<Cell> nearest_free_to_center(const OccupancyGrid& grid);

}  // namespace tg
