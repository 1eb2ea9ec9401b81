#include "latentdx/svg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"

namespace latentdx {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kMargin = 60.0;

const char* colour(int group) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[static_cast<std::size_t>(std::max(group, 0)) % 10];
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

void save(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string open_svg(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
     << "\" viewBox=\"0 0 " << num(kWidth) << " " << num(kHeight) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"18\">" << escape(title) << "</text>\n";
  return os.str();
}

}  // namespace

void write_scatter_svg(const Eigen::MatrixXd& coordinates, const std::vector<std::string>& labels,
                       const std::vector<int>& groups, const std::string& title,
                       const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(labels.size()) != coordinates.rows())
    throw DataError("one label per embedded point is required");
  const Eigen::RowVectorXd lo = coordinates.colwise().minCoeff();
  const Eigen::RowVectorXd hi = coordinates.colwise().maxCoeff();
  auto sx = [&](double v) {
    const double span = hi(0) - lo(0);
    return kMargin + (span > 0 ? (v - lo(0)) / span : 0.5) * (kWidth - 2 * kMargin);
  };
  auto sy = [&](double v) {
    const double span = hi(1) - lo(1);
    return kHeight - kMargin - (span > 0 ? (v - lo(1)) / span : 0.5) * (kHeight - 2 * kMargin);
  };
  std::ostringstream os;
  os << open_svg(title);
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    const int g = groups.empty() ? 0 : groups[static_cast<std::size_t>(i)];
    const double x = sx(coordinates(i, 0)), y = sy(coordinates(i, 1));
    os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"4\" fill=\"" << colour(g)
       << "\" fill-opacity=\"0.8\"/>\n";
    os << "<text x=\"" << num(x + 5) << "\" y=\"" << num(y - 5)
       << "\" font-family=\"sans-serif\" font-size=\"8\" fill=\"#333333\">" << escape(labels[static_cast<std::size_t>(i)])
       << "</text>\n";
  }
  os << "</svg>\n";
  save(path, os.str());
}

void export_embedding(const Embedding2D& embedding, const std::vector<std::string>& labels,
                      const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                      const std::vector<int>& groups, const std::string& title) {
  if (static_cast<Eigen::Index>(labels.size()) != embedding.coordinates.rows())
    throw DataError("one label per embedded point is required");
  {
    CsvWriter out(csv_path);
    out.row("code", "x", "y");
    for (std::size_t i = 0; i < labels.size(); ++i)
      out.row(labels[i], embedding.coordinates(static_cast<Eigen::Index>(i), 0),
              embedding.coordinates(static_cast<Eigen::Index>(i), 1));
  }
  write_scatter_svg(embedding.coordinates, labels, groups, title, svg_path);
}

void write_km_svg(const std::vector<KmCurve>& curves, const std::vector<std::string>& names,
                  const std::string& title, const std::filesystem::path& path) {
  if (curves.size() != names.size()) throw DataError("one name per survival curve is required");
  double t_max = 0.0;
  for (const auto& c : curves)
    if (!c.times.empty()) t_max = std::max(t_max, c.times.back());
  if (t_max <= 0.0) t_max = 1.0;
  auto sx = [&](double t) { return kMargin + t / t_max * (kWidth - 2 * kMargin); };
  auto sy = [&](double s) { return kHeight - kMargin - s * (kHeight - 2 * kMargin); };
  std::ostringstream os;
  os << open_svg(title);
  os << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << num(sy(0)) << "\" x2=\"" << num(sx(t_max)) << "\" y2=\""
     << num(sy(0)) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << num(sy(0)) << "\" x2=\"" << num(sx(0)) << "\" y2=\""
     << num(sy(1)) << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double s = tick / 4.0;
    os << "<text x=\"" << num(sx(0) - 8) << "\" y=\"" << num(sy(s) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << format_fixed(s, 2) << "</text>\n";
    const double t = t_max * tick / 4.0;
    os << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(sy(0) + 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << format_fixed(t, 1)
       << "</text>\n";
  }
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(kHeight - 15)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">years</text>\n";
  for (std::size_t g = 0; g < curves.size(); ++g) {
    const auto& c = curves[g];
    std::ostringstream pts;
    double s = 1.0;
    pts << num(sx(0)) << "," << num(sy(1.0));
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      pts << " " << num(sx(c.times[i])) << "," << num(sy(s));
      s = c.survival[i];
      pts << " " << num(sx(c.times[i])) << "," << num(sy(s));
    }
    pts << " " << num(sx(t_max)) << "," << num(sy(s));
    os << "<polyline fill=\"none\" stroke=\"" << colour(static_cast<int>(g)) << "\" stroke-width=\"2\" points=\""
       << pts.str() << "\"/>\n";
    os << "<text x=\"" << num(kWidth - kMargin - 120) << "\" y=\"" << num(kMargin + 18.0 * static_cast<double>(g))
       << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << colour(static_cast<int>(g)) << "\">"
       << escape(names[g]) << "</text>\n";
  }
  os << "</svg>\n";
  save(path, os.str());
}

}  // namespace latentdx
