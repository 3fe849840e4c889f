#include "mixbridge/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "mixbridge/error.hpp"

namespace mixbridge {

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::InvalidConfig, "expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    fail(ErrorKind::InvalidConfig, "expected a JSON array of arrays");
  }
  const auto rows = j.size();
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) fail(ErrorKind::InvalidConfig, "ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Json to_json(const GaussianMixture& mixture) {
  Json weights = Json::array();
  Json means = Json::array();
  Json covs = Json::array();
  for (int k = 0; k < mixture.size(); ++k) {
    weights.push_back(mixture.weight(k));
    means.push_back(to_json(mixture.component(k).mean()));
    covs.push_back(to_json(mixture.component(k).cov().matrix()));
  }
  return Json{{"weights", weights}, {"means", means}, {"covs", covs}};
}

GaussianMixture mixture_from_json(const Json& j) {
  for (const char* key : {"weights", "means", "covs"}) {
    if (!j.contains(key)) fail(ErrorKind::InvalidConfig, std::string("mixture JSON missing '") + key + "'");
  }
  const auto& w = j.at("weights");
  const auto& means = j.at("means");
  const auto& covs = j.at("covs");
  if (means.size() != w.size() || covs.size() != w.size()) {
    fail(ErrorKind::InvalidConfig, "mixture JSON arrays differ in length");
  }
  std::vector<double> weights;
  std::vector<Gaussian> comps;
  for (std::size_t k = 0; k < w.size(); ++k) {
    weights.push_back(w[k].get<double>());
    comps.emplace_back(vector_from_json(means[k]), matrix_from_json(covs[k]));
  }
  return GaussianMixture(std::move(weights), std::move(comps));
}

PointSet read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      std::string field = line.substr(start, end - start);
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      while (!field.empty() && field.front() == ' ') field.erase(field.begin());
      double value = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
      if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        fail(ErrorKind::InvalidConfig, "bad number '" + field + "' in " + path.string());
      }
      row.push_back(value);
      start = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      fail(ErrorKind::DimensionMismatch, "ragged rows in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::InvalidConfig, "no points in " + path.string());
  PointSet points(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return points;
}

void write_points_csv(const std::filesystem::path& path, const PointSet& points) {
  std::string text;
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (c > 0) text += ',';
      text += format_double(points(r, c));
    }
    text += '\n';
  }
  write_text_atomic(path, text);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace mixbridge
