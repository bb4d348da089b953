#include "bubbletrack/signal.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "bubbletrack/errors.hpp"

namespace bubbletrack {

bool Signal::same_grid(const Signal& o) const {
  return samples() == o.samples() && std::abs(dt - o.dt) <= 1e-12 * dt &&
         std::abs(t0 - o.t0) <= 1e-12 * std::max(1.0, std::abs(t0));
}

void require_same_grid(const Signal& a, const Signal& b, const char* where) {
  if (!a.same_grid(b)) {
    throw assumption_error("GridMismatch", std::string(where) + ": signals sampled on different grids");
  }
}

double sample_at(const Signal& s, Eigen::Index c, double t, Extension ext) {
  const Eigen::Index n = s.samples();
  if (n == 0) return 0.0;
  const double u = (t - s.t0) / s.dt;
  if (ext == Extension::zero) {
    if (u <= -1.0 || u >= static_cast<double>(n)) return 0.0;
  }
  if (n < 4) {
    // Too short for a cubic stencil: linear.
    double uc = std::clamp(u, 0.0, static_cast<double>(n - 1));
    auto k = static_cast<Eigen::Index>(std::floor(uc));
    if (k >= n - 1) return s.data(n - 1, c);
    double f = uc - k;
    return (1 - f) * s.data(k, c) + f * s.data(k + 1, c);
  }
  auto k = static_cast<Eigen::Index>(std::floor(u));
  double f = u - static_cast<double>(k);
  // Exact hits avoid round-off in the weights.
  if (f == 0.0 && k >= 0 && k < n) return s.data(k, c);

  Eigen::Index first = k - 1;
  if (ext == Extension::clamped) {
    first = std::clamp<Eigen::Index>(first, 0, n - 4);
  }
  double x = u - static_cast<double>(first);  // position relative to stencil start
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    Eigen::Index idx = first + j;
    double v = (idx < 0 || idx >= n) ? 0.0 : s.data(idx, c);
    if (v == 0.0) continue;
    double w = 1.0;
    for (int m = 0; m < 4; ++m) {
      if (m != j) w *= (x - m) / static_cast<double>(j - m);
    }
    acc += w * v;
  }
  return acc;
}

CubicStencil cubic_stencil(double u) {
  CubicStencil st;
  double k = std::floor(u);
  double f = u - k;
  st.first = static_cast<long>(k) - 1;
  if (f == 0.0) {
    st.w[1] = 1.0;
    return st;
  }
  const double x = f + 1.0;
  for (int j = 0; j < 4; ++j) {
    double w = 1.0;
    for (int m = 0; m < 4; ++m)
      if (m != j) w *= (x - m) / static_cast<double>(j - m);
    st.w[j] = w;
  }
  return st;
}

void accumulate_delayed(const Signal& src, Eigen::Index c, double delay, double scale, Eigen::Ref<Eigen::VectorXd> dst) {
  const long n = static_cast<long>(src.samples());
  const long m = static_cast<long>(dst.size());
  const CubicStencil st = cubic_stencil(-delay / src.dt);
  const auto col = src.data.col(c);
  for (long k = 0; k < m; ++k) {
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
      long idx = k + st.first + j;
      if (idx >= 0 && idx < n && st.w[j] != 0.0) acc += st.w[j] * col(idx);
    }
    dst(k) += scale * acc;
  }
}

namespace {
void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}
}  // namespace

void write_csv(const Signal& s, std::ostream& os) {
  std::string line = "time";
  for (Eigen::Index c = 0; c < s.channels(); ++c) line += ",ch" + std::to_string(c);
  os << line << '\n';
  for (Eigen::Index k = 0; k < s.samples(); ++k) {
    line.clear();
    append_double(line, s.time(k));
    for (Eigen::Index c = 0; c < s.channels(); ++c) {
      line.push_back(',');
      append_double(line, s.data(k, c));
    }
    os << line << '\n';
  }
}

void write_csv(const Signal& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw assumption_error("IOError", "cannot open " + path);
  write_csv(s, f);
}

Signal read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw assumption_error("IOError", "empty CSV");
  Eigen::Index nch = std::count(line.begin(), line.end(), ',');
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(row.size()) != nch + 1) throw assumption_error("IOError", "ragged CSV row");
    rows.push_back(std::move(row));
  }
  Signal s;
  s.data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), nch);
  for (size_t k = 0; k < rows.size(); ++k)
    for (Eigen::Index c = 0; c < nch; ++c) s.data(static_cast<Eigen::Index>(k), c) = rows[k][c + 1];
  if (!rows.empty()) s.t0 = rows[0][0];
  if (rows.size() > 1) s.dt = rows[1][0] - rows[0][0];
  return s;
}

}  // namespace bubbletrack
