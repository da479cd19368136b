#pragma once

#include "transform.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace psprop::io {

using json = nlohmann::json;

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// CSV with header "x,re,im" (position, d = 1), "q,p,re,im" (phase, d = 1) or
// "x1,..,xd,re,im" / "q1,..,qd,p1,..,pd,re,im" in higher dimension.
inline void write_csv(const ComplexField& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  const int d = f.dim();
  std::string header;
  if (f.kind() == FieldKind::position) {
    for (int k = 0; k < d; ++k) header += d == 1 ? "x," : "x" + std::to_string(k + 1) + ",";
  } else {
    for (int k = 0; k < d; ++k) header += d == 1 ? "q," : "q" + std::to_string(k + 1) + ",";
    for (int k = 0; k < d; ++k) header += d == 1 ? "p," : "p" + std::to_string(k + 1) + ",";
  }
  out << header << "re,im\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec X = f.point(i);
    for (int k = 0; k < X.size(); ++k) out << fmt_double(X(k)) << ',';
    out << fmt_double(f[i].real()) << ',' << fmt_double(f[i].imag()) << '\n';
  }
}

inline void write_table(const std::filesystem::path& path, const std::vector<std::string>& cols,
                        const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << fmt_double(r[k]);
    out << '\n';
  }
}

// One JSON object per line, flushed per record.
class JsonLines {
 public:
  JsonLines() = default;
  explicit JsonLines(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }
  void emit(const json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n' << std::flush;
    records_.push_back(j);
  }
  const std::vector<json>& records() const { return records_; }

 private:
  std::ofstream out_;
  std::vector<json> records_;
};

}  // namespace psprop::io
