#include "xvtp/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <stdexcept>

namespace xvtp {

namespace {

struct Rgb {
  unsigned char r, g, b;
};

constexpr Rgb kBackground{255, 255, 255};
constexpr Rgb kLane{170, 170, 170};
constexpr Rgb kOtherAgent{70, 110, 200};
constexpr Rgb kObserved{0, 0, 0};
constexpr Rgb kTruth{30, 160, 60};
constexpr Rgb kPredicted{240, 140, 20};
constexpr Rgb kGoal{210, 20, 40};

class Canvas {
 public:
  Canvas(int width, int height) : w_(width), h_(height), px_(static_cast<std::size_t>(width * height), kBackground) {}

  void set(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y * w_ + x)] = c;
  }

  void disc(double cx, double cy, double radius, Rgb c) {
    const int r = static_cast<int>(std::ceil(radius));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= radius * radius) {
          set(static_cast<int>(std::lround(cx)) + dx, static_cast<int>(std::lround(cy)) + dy, c);
        }
      }
    }
  }

  void line(double x0, double y0, double x1, double y1, double width, Rgb c) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      disc(x0 + t * (x1 - x0), y0 + t * (y1 - y0), width / 2.0, c);
    }
  }

  void star(double cx, double cy, double radius, Rgb c) {
    for (int i = 0; i < 5; ++i) {
      const double a = -std::numbers::pi / 2 + i * 2.0 * std::numbers::pi / 5.0;
      line(cx, cy, cx + radius * std::cos(a), cy + radius * std::sin(a), 2.5, c);
    }
    disc(cx, cy, radius * 0.35, c);
  }

  void write_png(const std::filesystem::path& path) const {
    FILE* file = std::fopen(path.string().c_str(), "wb");
    if (file == nullptr) throw std::runtime_error("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(file);
      throw std::runtime_error("failed encoding image " + path.string());
    }
    png_init_io(png, file);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h_; ++y) {
      png_write_row(png, reinterpret_cast<png_const_bytep>(&px_[static_cast<std::size_t>(y * w_)]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(file);
  }

 private:
  int w_, h_;
  std::vector<Rgb> px_;
};

static_assert(sizeof(Rgb) == 3);

// Pink ramp; t in [0, 1], darker for larger t.
Rgb heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [t](double a, double b) { return static_cast<unsigned char>(std::lround(a + t * (b - a))); };
  return {mix(255, 150), mix(215, 0), mix(230, 80)};
}

double max_score(const Eigen::VectorXd& scores) { return scores.size() > 0 ? std::max(scores.maxCoeff(), 1e-300) : 1.0; }

void polyline(Canvas& c, const std::vector<Eigen::Vector2d>& pts, double width, Rgb color) {
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    c.line(pts[i].x(), pts[i].y(), pts[i + 1].x(), pts[i + 1].y(), width, color);
  }
  if (pts.size() == 1) c.disc(pts[0].x(), pts[0].y(), width / 2.0, color);
}

}  // namespace

void plot_bev(const Sample& s, const PlotInputs& in, const std::filesystem::path& path) {
  // Fit the target history, futures and candidates; lanes may be clipped.
  Eigen::AlignedBox2d box;
  for (const Point3d& p : s.target().polyline) box.extend(p.head<2>());
  for (const Point2d& p : s.future_bev) box.extend(p);
  for (const Point3d& p : in.candidates) box.extend(p.head<2>());
  for (const auto& t : in.bev) {
    for (Eigen::Index k = 0; k < t.rows(); ++k) box.extend(Eigen::Vector2d(t.row(k).transpose()));
  }
  const double margin = 5.0;
  const Eigen::Vector2d lo = box.min().array() - margin;
  const Eigen::Vector2d hi = box.max().array() + margin;
  const int size = 800;
  const double scale = size / std::max(hi.x() - lo.x(), hi.y() - lo.y());
  auto to_px = [&](const Eigen::Vector2d& w) {
    return Eigen::Vector2d((w.x() - lo.x()) * scale, size - (w.y() - lo.y()) * scale);
  };

  Canvas c(size, size);
  for (const Instance& inst : s.instances) {
    std::vector<Eigen::Vector2d> pts;
    for (const Point3d& p : inst.polyline) pts.push_back(to_px(p.head<2>()));
    if (inst.kind == InstanceKind::kLane) {
      polyline(c, pts, 3.0, kLane);
    } else if (inst.id != s.target_id) {
      polyline(c, pts, 3.0, kOtherAgent);
    }
  }
  const double top = max_score(in.scores);
  for (std::size_t q = 0; q < in.candidates.size(); ++q) {
    const Eigen::Vector2d p = to_px(in.candidates[q].head<2>());
    const double score = q < static_cast<std::size_t>(in.scores.size()) ? in.scores(static_cast<Eigen::Index>(q)) : 0.0;
    c.disc(p.x(), p.y(), 3.0, heat_color(score / top));
  }
  std::vector<Eigen::Vector2d> observed;
  for (const Point3d& p : s.target().polyline) observed.push_back(to_px(p.head<2>()));
  std::vector<Eigen::Vector2d> truth{observed.back()};
  for (const Point2d& p : s.future_bev) truth.push_back(to_px(p));
  for (const auto& t : in.bev) {
    std::vector<Eigen::Vector2d> pts{observed.back()};
    for (Eigen::Index k = 0; k < t.rows(); ++k) pts.push_back(to_px(Eigen::Vector2d(t.row(k).transpose())));
    polyline(c, pts, 2.5, kPredicted);
  }
  polyline(c, truth, 3.0, kTruth);
  polyline(c, observed, 3.0, kObserved);
  for (const Point3d& g : in.goals) {
    const Eigen::Vector2d p = to_px(g.head<2>());
    c.star(p.x(), p.y(), 9.0, kGoal);
  }
  c.write_png(path);
}

void plot_fpv(const Sample& s, const PlotInputs& in, const std::filesystem::path& path) {
  const Camera& cam = s.camera;
  const double scale = 0.5;
  const int w = static_cast<int>(std::lround(cam.image_width * scale));
  const int h = static_cast<int>(std::lround(cam.image_height * scale));
  Canvas c(w, h);
  auto project = [&](const Point3d& p) -> std::optional<Eigen::Vector2d> {
    if (auto uv = project_to_fpv(p, cam)) return Eigen::Vector2d(*uv * scale);
    return std::nullopt;
  };
  // Segments are drawn only when both ends are visible.
  auto draw_path = [&](const std::vector<std::optional<Eigen::Vector2d>>& pts, double width, Rgb color) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if (pts[i] && pts[i + 1]) c.line(pts[i]->x(), pts[i]->y(), pts[i + 1]->x(), pts[i + 1]->y(), width, color);
    }
  };

  for (const Instance& inst : s.instances) {
    if (inst.id == s.target_id) continue;
    std::vector<std::optional<Eigen::Vector2d>> pts;
    for (const Point3d& p : inst.polyline) {
      pts.push_back(project(inst.kind == InstanceKind::kAgent ? Point3d(p.x(), p.y(), 0.0) : p));
    }
    draw_path(pts, 3.0, inst.kind == InstanceKind::kLane ? kLane : kOtherAgent);
  }
  const double top = max_score(in.scores);
  for (std::size_t q = 0; q < in.candidates.size(); ++q) {
    if (const auto p = project(in.candidates[q])) {
      const double score = q < static_cast<std::size_t>(in.scores.size()) ? in.scores(static_cast<Eigen::Index>(q)) : 0.0;
      c.disc(p->x(), p->y(), 3.0, heat_color(score / top));
    }
  }
  for (const auto& t : in.fpv) {
    if (!t) continue;
    std::vector<std::optional<Eigen::Vector2d>> pts;
    for (Eigen::Index k = 0; k < t->rows(); ++k) pts.emplace_back(Eigen::Vector2d(t->row(k).transpose()) * scale);
    draw_path(pts, 2.5, kPredicted);
  }
  std::vector<std::optional<Eigen::Vector2d>> truth;
  for (const auto& uv : s.future_fpv()) {
    truth.push_back(uv ? std::optional<Eigen::Vector2d>(*uv * scale) : std::nullopt);
  }
  draw_path(truth, 3.0, kTruth);
  std::vector<std::optional<Eigen::Vector2d>> observed;
  for (const Point3d& p : s.target().polyline) observed.push_back(project(Point3d(p.x(), p.y(), 0.0)));
  draw_path(observed, 3.0, kObserved);
  for (const Point3d& g : in.goals) {
    if (const auto p = project(g)) c.star(p->x(), p->y(), 9.0, kGoal);
  }
  c.write_png(path);
}

}  // namespace xvtp
