#include <cmath>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <utility>

#include "stocat/problem.hpp"

namespace stocat {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& msg)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + msg), line_(line) {}

namespace {

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct Entry {
  Index col;
  double val;
};

}  // namespace

Dataset parse_libsvm(std::istream& in, const std::string& source) {
  std::vector<double> labels;
  std::vector<std::vector<Entry>> rows;
  Index max_col = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;

    double label = 0.0;
    if (!parse_double(tok, label)) throw ParseError(source, lineno, "malformed label '" + tok + "'");
    if (label != 1.0 && label != -1.0)
      throw ParseError(source, lineno, "unknown label value '" + tok + "'");

    std::vector<Entry> row;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw ParseError(source, lineno, "expected idx:val, got '" + tok + "'");
      long long idx = 0;
      const std::string_view idx_str(tok.data(), colon);
      const auto [ptr, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
      if (ec != std::errc() || ptr != idx_str.data() + idx_str.size() || idx < 1)
        throw ParseError(source, lineno, "bad feature index in '" + tok + "'");
      double val = 0.0;
      if (!parse_double(std::string_view(tok).substr(colon + 1), val) || !std::isfinite(val))
        throw ParseError(source, lineno, "bad feature value in '" + tok + "'");
      row.push_back({static_cast<Index>(idx - 1), val});
      max_col = std::max(max_col, static_cast<Index>(idx));
    }
    labels.push_back(label);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source, lineno, "no examples");

  Dataset ds;
  const auto n = static_cast<Index>(rows.size());
  ds.features = RowMatrix::Zero(n, std::max<Index>(max_col, 1));
  ds.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    ds.labels[i] = labels[static_cast<std::size_t>(i)];
    for (const Entry& e : rows[static_cast<std::size_t>(i)]) ds.features(i, e.col) = e.val;
  }
  normalize_rows(ds.features);
  return ds;
}

Dataset load_libsvm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_libsvm(in, path.string());
}

}  // namespace stocat
