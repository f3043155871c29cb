#pragma once

// File formats.
//
// Symmetric matrix, CSV:     "p,<p>" then p rows of p comma-separated values.
// Symmetric matrix, binary:  8-byte magic "CVTSSYM1", uint64 p, then the
//                            lower triangle row by row (j = 0..p-1, k = 0..j)
//                            as little-endian float64.
// Data matrix, CSV:          "p,<p>,n,<n>" then p rows of n values.
// Data matrix, binary:       "CVTSDAT1", uint64 p, uint64 n, column-major float64.
//
// Numbers are written in shortest round-trip form, so CSV files reload
// bit-identically. Process specs and glasso solutions serialize to JSON.

#include "covts/core.hpp"
#include "covts/glasso.hpp"
#include "covts/procsim.hpp"

#include <json.hpp>

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace covts::io {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw IoError(context + ": cannot parse number '" + s + "'");
  return v;
}

inline std::size_t parse_size(const std::string& s, const std::string& context) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(context + ": cannot parse count '" + s + "'");
  return v;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void check_written(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Symmetric matrices
// ---------------------------------------------------------------------------

inline constexpr char kSymMagic[8] = {'C', 'V', 'T', 'S', 'S', 'Y', 'M', '1'};
inline constexpr char kDataMagic[8] = {'C', 'V', 'T', 'S', 'D', 'A', 'T', '1'};

inline void write_matrix_csv(std::ostream& out, const SymMatrix& m) {
  out << "p," << m.dim() << '\n';
  for (std::size_t j = 0; j < m.dim(); ++j) {
    for (std::size_t k = 0; k < m.dim(); ++k) {
      if (k) out << ',';
      out << format_double(m(j, k));
    }
    out << '\n';
  }
}

// Reads the lower triangle; an asymmetric file is rejected.
inline SymMatrix read_matrix_csv(std::istream& in, const std::string& context = "matrix csv") {
  std::string line;
  if (!std::getline(in, line)) throw IoError(context + ": empty input");
  auto head = split_csv_line(line);
  if (head.size() != 2 || head[0] != "p") throw IoError(context + ": expected header 'p,<p>'");
  const std::size_t p = parse_size(head[1], context);
  Matrix a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    if (!std::getline(in, line)) throw IoError(context + ": expected " + std::to_string(p) + " rows");
    auto cells = split_csv_line(line);
    if (cells.size() != p) throw IoError(context + ": row " + std::to_string(j + 1) + " has wrong length");
    for (std::size_t k = 0; k < p; ++k) a(Eigen::Index(j), Eigen::Index(k)) = parse_double(cells[k], context);
  }
  if (!(a - a.transpose()).isZero(0.0)) throw IoError(context + ": matrix is not symmetric");
  return SymMatrix::from_lower(a);
}

inline void write_matrix_binary(std::ostream& out, const SymMatrix& m) {
  out.write(kSymMagic, 8);
  const std::uint64_t p = m.dim();
  out.write(reinterpret_cast<const char*>(&p), sizeof p);
  const auto cells = m.packed();
  out.write(reinterpret_cast<const char*>(cells.data()), std::streamsize(cells.size() * sizeof(double)));
}

inline SymMatrix read_matrix_binary(std::istream& in, const std::string& context = "matrix binary") {
  char magic[8];
  std::uint64_t p = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kSymMagic, 8) != 0) throw IoError(context + ": bad magic");
  if (!in.read(reinterpret_cast<char*>(&p), sizeof p)) throw IoError(context + ": truncated header");
  SymMatrix m(p);
  auto cells = m.packed();
  if (!in.read(reinterpret_cast<char*>(cells.data()), std::streamsize(cells.size() * sizeof(double))))
    throw IoError(context + ": truncated payload");
  return m;
}

inline bool has_magic(const std::string& path, const char (&magic)[8]) {
  std::ifstream in(path, std::ios::binary);
  char buf[8];
  return in && in.read(buf, 8) && std::memcmp(buf, magic, 8) == 0;
}

inline void save_matrix(const std::string& path, const SymMatrix& m, bool binary = false) {
  auto out = open_out(path, binary ? std::ios::binary : std::ios::out);
  binary ? write_matrix_binary(out, m) : write_matrix_csv(out, m);
  check_written(out, path);
}

inline SymMatrix load_matrix(const std::string& path) {
  if (has_magic(path, kSymMagic)) {
    auto in = open_in(path, std::ios::binary);
    return read_matrix_binary(in, path);
  }
  auto in = open_in(path);
  return read_matrix_csv(in, path);
}

// ---------------------------------------------------------------------------
// Data matrices
// ---------------------------------------------------------------------------

inline void write_data_csv(std::ostream& out, const DataMatrix& z) {
  out << "p," << z.p() << ",n," << z.n() << '\n';
  for (std::size_t j = 0; j < z.p(); ++j) {
    for (std::size_t i = 0; i < z.n(); ++i) {
      if (i) out << ',';
      out << format_double(z.values()(Eigen::Index(j), Eigen::Index(i)));
    }
    out << '\n';
  }
}

inline DataMatrix read_data_csv(std::istream& in, const std::string& context = "data csv") {
  std::string line;
  if (!std::getline(in, line)) throw IoError(context + ": empty input");
  auto head = split_csv_line(line);
  if (head.size() != 4 || head[0] != "p" || head[2] != "n") throw IoError(context + ": expected header 'p,<p>,n,<n>'");
  const std::size_t p = parse_size(head[1], context), n = parse_size(head[3], context);
  Matrix a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < p; ++j) {
    if (!std::getline(in, line)) throw IoError(context + ": expected " + std::to_string(p) + " rows");
    auto cells = split_csv_line(line);
    if (cells.size() != n) throw IoError(context + ": row " + std::to_string(j + 1) + " has wrong length");
    for (std::size_t i = 0; i < n; ++i) a(Eigen::Index(j), Eigen::Index(i)) = parse_double(cells[i], context);
  }
  return DataMatrix(std::move(a));
}

inline void write_data_binary(std::ostream& out, const DataMatrix& z) {
  out.write(kDataMagic, 8);
  const std::uint64_t dims[2] = {z.p(), z.n()};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(z.values().data()), std::streamsize(z.values().size() * sizeof(double)));
}

inline DataMatrix read_data_binary(std::istream& in, const std::string& context = "data binary") {
  char magic[8];
  std::uint64_t dims[2] = {0, 0};
  if (!in.read(magic, 8) || std::memcmp(magic, kDataMagic, 8) != 0) throw IoError(context + ": bad magic");
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims)) throw IoError(context + ": truncated header");
  Matrix a(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  if (!in.read(reinterpret_cast<char*>(a.data()), std::streamsize(a.size() * sizeof(double))))
    throw IoError(context + ": truncated payload");
  return DataMatrix(std::move(a));
}

inline void save_data(const std::string& path, const DataMatrix& z, bool binary = false) {
  auto out = open_out(path, binary ? std::ios::binary : std::ios::out);
  binary ? write_data_binary(out, z) : write_data_csv(out, z);
  check_written(out, path);
}

inline DataMatrix load_data(const std::string& path) {
  if (has_magic(path, kDataMagic)) {
    auto in = open_in(path, std::ios::binary);
    return read_data_binary(in, path);
  }
  auto in = open_in(path);
  return read_data_csv(in, path);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json to_json(const Matrix& a) {
  json rows = json::array();
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    json row = json::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(a(j, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidArgument(what + ": expected an array of rows");
  const auto r = Eigen::Index(j.size());
  const auto c = r ? Eigen::Index(j[0].size()) : 0;
  Matrix a(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!j[std::size_t(i)].is_array() || Eigen::Index(j[std::size_t(i)].size()) != c)
      throw InvalidArgument(what + ": ragged rows");
    for (Eigen::Index k = 0; k < c; ++k) a(i, k) = j[std::size_t(i)][std::size_t(k)].get<double>();
  }
  return a;
}

inline SymMatrix symmatrix_from_json(const json& j, const std::string& what) {
  const Matrix a = matrix_from_json(j, what);
  require(a.rows() == a.cols(), what + ": matrix must be square");
  require((a - a.transpose()).isZero(0.0), what + ": matrix must be symmetric");
  return SymMatrix::from_lower(a);
}

namespace detail {

inline json linear_to_json(const procsim::LinearDecayParams& lp) {
  json j{{"decay", lp.decay},
         {"mixing", lp.mixing == procsim::Mixing::circulant ? "circulant" : "identity"},
         {"unit_variance", lp.unit_variance}};
  if (lp.truncation) j["truncation"] = *lp.truncation;
  return j;
}

inline procsim::LinearDecayParams linear_from_json(const json& j) {
  procsim::LinearDecayParams lp;
  lp.decay = j.value("decay", 1.0);
  if (j.contains("truncation")) lp.truncation = j.at("truncation").get<std::size_t>();
  const std::string mix = j.value("mixing", "circulant");
  require(mix == "circulant" || mix == "identity", "process: mixing must be 'circulant' or 'identity'");
  lp.mixing = mix == "circulant" ? procsim::Mixing::circulant : procsim::Mixing::identity;
  lp.unit_variance = j.value("unit_variance", false);
  return lp;
}

inline json path_to_json(const procsim::AffinePath& a) { return json::array({a.a0, a.a1}); }

inline procsim::AffinePath path_from_json(const json& j) {
  require(j.is_array() && j.size() == 2, "process: affine path must be [a0, a1]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

inline json to_json(const procsim::ProcessSpec& spec) {
  using namespace procsim;
  json j{{"kind", to_string(spec.kind())}, {"p", spec.p}, {"burn_in", spec.burn_in}, {"seed", spec.seed}};
  if (spec.innovations.kind() == InnovationKind::gaussian)
    j["innovations"] = {{"kind", "gaussian"}};
  else
    j["innovations"] = {{"kind", "student_t"}, {"df", spec.innovations.df()}, {"q", spec.innovations.moment_order()}};
  std::visit(
      [&](const auto& params) {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, Var1Params>) {
          j["transition"] = to_json(params.transition);
          if (params.innovation_factor.size()) j["innovation_factor"] = to_json(params.innovation_factor);
        } else if constexpr (std::is_same_v<T, LinearDecayParams>) {
          j.update(detail::linear_to_json(params));
        } else if constexpr (std::is_same_v<T, IteratedMapParams>) {
          j["contraction"] = params.contraction;
          j["map"] = params.map == MapKind::identity ? "identity" : "abs";
        } else if constexpr (std::is_same_v<T, ModulatedParams>) {
          j["path"] = {{"start", to_json(params.path.start.dense())}, {"end", to_json(params.path.end.dense())}};
          if (params.base) j["base"] = to_json(*params.base);
        } else {
          j["lags"] = detail::linear_to_json(params.lags);
          j["lead"] = detail::path_to_json(params.lead);
          j["tail"] = detail::path_to_json(params.tail);
        }
      },
      spec.params);
  if (spec.output_factor.size()) j["output_factor"] = to_json(spec.output_factor);
  return j;
}

inline procsim::ProcessSpec process_from_json(const json& j) {
  using namespace procsim;
  require(j.is_object(), "process: expected an object");
  ProcessSpec spec;
  spec.p = j.value("p", std::size_t{1});
  spec.burn_in = j.value("burn_in", std::size_t{1000});
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("innovations")) {
    const auto& in = j.at("innovations");
    const std::string kind = in.value("kind", "gaussian");
    if (kind == "gaussian")
      spec.innovations = InnovationLaw::gaussian();
    else if (kind == "student_t")
      spec.innovations = InnovationLaw::student_t(in.value("df", 9.0), in.value("q", 4.0));
    else
      throw InvalidArgument("process: unknown innovation kind '" + kind + "'");
  }
  const std::string kind = j.value("kind", "var1");
  if (kind == "var1") {
    Var1Params vp;
    vp.transition = j.contains("transition") ? matrix_from_json(j.at("transition"), "transition")
                                             : Matrix(Matrix::Zero(Eigen::Index(spec.p), Eigen::Index(spec.p)));
    if (j.contains("innovation_factor")) vp.innovation_factor = matrix_from_json(j.at("innovation_factor"), "innovation_factor");
    spec.params = vp;
  } else if (kind == "linear_decay") {
    spec.params = detail::linear_from_json(j);
  } else if (kind == "iterated_map") {
    IteratedMapParams mp;
    mp.contraction = j.value("contraction", 0.5);
    const std::string map = j.value("map", "identity");
    require(map == "identity" || map == "abs", "process: map must be 'identity' or 'abs'");
    mp.map = map == "identity" ? MapKind::identity : MapKind::abs;
    spec.params = mp;
  } else if (kind == "modulated") {
    ModulatedParams mp;
    const auto& path = j.at("path");
    mp.path.start = symmatrix_from_json(path.at("start"), "path.start");
    mp.path.end = symmatrix_from_json(path.at("end"), "path.end");
    if (j.contains("base")) mp.base = std::make_shared<const ProcessSpec>(process_from_json(j.at("base")));
    spec.params = mp;
  } else if (kind == "nonstat_linear") {
    NonstatLinearParams np;
    np.lags = detail::linear_from_json(j.value("lags", json::object()));
    if (j.contains("lead")) np.lead = detail::path_from_json(j.at("lead"));
    if (j.contains("tail")) np.tail = detail::path_from_json(j.at("tail"));
    spec.params = np;
  } else {
    throw InvalidArgument("process: unknown kind '" + kind + "'");
  }
  if (j.contains("output_factor")) spec.output_factor = matrix_from_json(j.at("output_factor"), "output_factor");
  return spec;
}

inline json to_json(const glasso::GlassoSolution& s) {
  json j{{"lambda", s.lambda},
         {"iterations", s.iterations},
         {"primal_residual", s.primal_residual},
         {"dual_residual", s.dual_residual},
         {"kkt_residual", s.kkt_residual},
         {"p", s.omega.dim()}};
  if (s.t) j["t"] = *s.t;
  if (s.b) j["b"] = *s.b;
  return j;
}

inline void save_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  check_written(out, path);
}

inline json load_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

}  // namespace covts::io
