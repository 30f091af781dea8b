#include "fedsim/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string strip_comment_and_trim(const std::string& line) {
  std::string s = line;
  const auto hash = s.find('#');
  if (hash != std::string::npos) s.erase(hash);
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_double_tok(const std::string& tok, std::size_t line, const char* what) {
  // from_chars rejects an explicit plus sign, but "+1" labels are common.
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  if (begin != end && *begin == '+') ++begin;
  double v = 0.0;
  const auto res = std::from_chars(begin, end, v);
  if (begin == end || res.ec != std::errc() || res.ptr != end)
    throw ParseError(std::string("malformed ") + what + " '" + tok + "'", line);
  return v;
}

std::uint64_t parse_uint_tok(const std::string& tok, std::size_t line, const char* what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ParseError(std::string("malformed ") + what + " '" + tok + "'", line);
  return v;
}

}  // namespace

Dataset parse_svmlight(std::istream& in, std::uint32_t dim_override) {
  Dataset data;
  std::uint32_t max_index = 0;  // 1-based
  std::string line;
  std::size_t line_no = 0;
  bool all_pm1 = true;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip_comment_and_trim(line);
    if (body.empty()) continue;
    const std::vector<std::string> toks = split_ws(body);

    const double label = parse_double_tok(toks[0], line_no, "label");
    if (!std::isfinite(label)) throw ParseError("non-finite label", line_no);
    if (label != 1.0 && label != -1.0) all_pm1 = false;

    SparseVector xi;
    std::uint32_t prev = 0;
    for (std::size_t t = 1; t < toks.size(); ++t) {
      const std::string& tok = toks[t];
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
        throw ParseError("malformed feature token '" + tok + "'", line_no);
      const std::uint64_t idx = parse_uint_tok(tok.substr(0, colon), line_no, "feature index");
      if (idx == 0) throw ParseError("feature index must be >= 1", line_no);
      if (idx > 0xffffffffull) throw ParseError("feature index too large", line_no);
      if (prev != 0 && idx == prev)
        throw ParseError("duplicate index " + std::to_string(idx), line_no);
      if (idx < prev)
        throw ParseError("non-increasing index " + std::to_string(idx), line_no);
      prev = static_cast<std::uint32_t>(idx);
      if (dim_override != 0 && idx > dim_override)
        throw ParseError("feature index " + std::to_string(idx) + " exceeds declared dim " +
                             std::to_string(dim_override),
                         line_no);
      const double value = parse_double_tok(tok.substr(colon + 1), line_no, "feature value");
      if (!std::isfinite(value)) throw ParseError("non-finite feature value", line_no);
      if (value == 0.0) continue;  // canonical form stores no zeros
      xi.idx.push_back(static_cast<std::uint32_t>(idx - 1));
      xi.val.push_back(value);
      max_index = std::max(max_index, static_cast<std::uint32_t>(idx));
    }
    data.x.push_back(std::move(xi));
    data.y.push_back(label);
  }

  if (data.x.empty()) throw ParseError("no examples", line_no == 0 ? 1 : line_no);
  data.dim = dim_override != 0 ? dim_override : std::max(max_index, 1u);
  for (auto& xi : data.x) xi.dim = data.dim;
  data.loss = all_pm1 ? LossKind::Logistic : LossKind::Quadratic;
  data.validate();
  return data;
}

Dataset parse_svmlight_file(const std::string& path, std::uint32_t dim_override) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file: " + path);
  return parse_svmlight(in, dim_override);
}

void write_svmlight(const Dataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << fmt17(data.y[i]);
    const SparseVector& xi = data.x[i];
    for (std::size_t p = 0; p < xi.idx.size(); ++p)
      out << ' ' << (xi.idx[p] + 1) << ':' << fmt17(xi.val[p]);
    out << '\n';
  }
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << "round,objective,gap,test_error\n";
  for (const TraceRecord& r : trace.records)
    out << r.round << ',' << fmt17(r.objective) << ',' << fmt17(r.gap) << ','
        << fmt17(r.test_error) << '\n';
}

namespace {

std::string json_number(double v) { return std::isfinite(v) ? fmt17(v) : "null"; }

}  // namespace

void write_trace_jsonl(const Trace& trace, std::ostream& out) {
  for (const TraceRecord& r : trace.records)
    out << "{\"round\":" << r.round << ",\"objective\":" << json_number(r.objective)
        << ",\"gap\":" << json_number(r.gap) << ",\"test_error\":" << json_number(r.test_error)
        << "}\n";
}

void write_trace(const Trace& trace, TraceFormat format, std::ostream& out) {
  if (format == TraceFormat::Csv)
    write_trace_csv(trace, out);
  else
    write_trace_jsonl(trace, out);
}

void write_compare_csv(const std::vector<std::pair<std::string, Trace>>& runs,
                       std::ostream& out) {
  out << "algo,round,objective,gap,test_error\n";
  for (const auto& [name, trace] : runs)
    for (const TraceRecord& r : trace.records)
      out << name << ',' << r.round << ',' << fmt17(r.objective) << ',' << fmt17(r.gap) << ','
          << fmt17(r.test_error) << '\n';
}

Partition read_partition(std::istream& in, std::uint32_t n) {
  Partition part;
  part.n = n;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip_comment_and_trim(line);
    if (body.empty()) continue;
    std::vector<std::uint32_t> block;
    for (const std::string& tok : split_ws(body)) {
      const std::uint64_t idx = parse_uint_tok(tok, line_no, "example index");
      if (idx >= n)
        throw ParseError("example index " + std::to_string(idx) + " out of range for n = " +
                             std::to_string(n),
                         line_no);
      block.push_back(static_cast<std::uint32_t>(idx));
    }
    if (block.empty()) throw ParseError("empty node line", line_no);
    part.blocks.push_back(std::move(block));
  }
  try {
    part.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), line_no == 0 ? 1 : line_no);
  }
  return part;
}

void write_partition(const Partition& part, std::ostream& out) {
  for (const auto& block : part.blocks) {
    for (std::size_t j = 0; j < block.size(); ++j) {
      if (j != 0) out << ' ';
      out << block[j];
    }
    out << '\n';
  }
}

std::vector<std::uint32_t> read_groups(std::istream& in) {
  std::vector<std::uint32_t> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip_comment_and_trim(line);
    if (body.empty()) continue;
    groups.push_back(static_cast<std::uint32_t>(parse_uint_tok(body, line_no, "group label")));
  }
  return groups;
}

void write_groups(const std::vector<std::uint32_t>& groups, std::ostream& out) {
  for (std::uint32_t g : groups) out << g << '\n';
}

SyntheticSpec read_synthetic_spec(std::istream& in) {
  SyntheticSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip_comment_and_trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    const std::string key = strip_comment_and_trim(body.substr(0, eq));
    const std::string value = strip_comment_and_trim(body.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError("expected key=value", line_no);

    if (key == "n") spec.n = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "n"));
    else if (key == "d") spec.d = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "d"));
    else if (key == "groups")
      spec.groups = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "groups"));
    else if (key == "support_size")
      spec.support_size = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "support_size"));
    else if (key == "overlap") spec.overlap = parse_double_tok(value, line_no, "overlap");
    else if (key == "leak") spec.leak = parse_double_tok(value, line_no, "leak");
    else if (key == "nnz_per_point")
      spec.nnz_per_point =
          static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "nnz_per_point"));
    else if (key == "label_model") {
      if (value == "ridge") spec.label_model = LabelModel::RidgePlanted;
      else if (value == "logistic") spec.label_model = LabelModel::LogisticPlanted;
      else throw ParseError("label_model must be 'ridge' or 'logistic'", line_no);
    } else if (key == "noise") spec.noise = parse_double_tok(value, line_no, "noise");
    else if (key == "seed") spec.seed = parse_uint_tok(value, line_no, "seed");
    else if (key == "size_min")
      spec.size_min = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "size_min"));
    else if (key == "size_max")
      spec.size_max = static_cast<std::uint32_t>(parse_uint_tok(value, line_no, "size_max"));
    else if (key == "test_fraction")
      spec.test_fraction = parse_double_tok(value, line_no, "test_fraction");
    else throw ParseError("unknown key '" + key + "'", line_no);
  }
  spec.validate();
  return spec;
}

SyntheticSpec read_synthetic_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open spec file: " + path);
  return read_synthetic_spec(in);
}

}  // namespace fedsim
