#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "xvtp/scene.hpp"

namespace xvtp {

// What one predicted sample contributes to a figure.
struct PlotInputs {
  std::vector<Point3d> candidates;  // world
  Eigen::VectorXd scores;           // heatmap over candidates
  std::vector<Point3d> goals;       // world
  std::vector<Eigen::MatrixXd> bev;                  // T x 2 world m
  std::vector<std::optional<Eigen::MatrixXd>> fpv;   // T x 2 px
};

// Top-down panel: lanes, heatmap dots (darker = higher score), observed,
// ground-truth and predicted trajectories, goals as stars.
void plot_bev(const Sample& s, const PlotInputs& in, const std::filesystem::path& path);
// Camera panel with the same layers projected to the image.
void plot_fpv(const Sample& s, const PlotInputs& in, const std::filesystem::path& path);

}  // namespace xvtp
