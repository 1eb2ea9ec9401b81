#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "latentdx/survival.hpp"
#include "latentdx/tsne.hpp"

namespace latentdx {

/// Scatter plot with one labelled circle per row. `groups`, when given,
/// colours the points.
void write_scatter_svg(const Eigen::MatrixXd& coordinates, const std::vector<std::string>& labels,
                       const std::vector<int>& groups, const std::string& title,
                       const std::filesystem::path& path);

/// `code,x,y` plus the scatter SVG.
void export_embedding(const Embedding2D& embedding, const std::vector<std::string>& labels,
                      const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                      const std::vector<int>& groups = {}, const std::string& title = "t-SNE embedding");

/// Step curves, one per subgroup.
void write_km_svg(const std::vector<KmCurve>& curves, const std::vector<std::string>& names,
                  const std::string& title, const std::filesystem::path& path);

}  // namespace latentdx
