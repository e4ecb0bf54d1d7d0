#include "redi/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "redi/errors.hpp"

namespace redi {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto bar = line.find('|', start);
    out.push_back(trim(line.substr(start, bar == std::string_view::npos ? line.npos : bar - start)));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

long parse_int(std::string_view text, std::string_view what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

SequenceState parse_state(std::string_view text, const StateSpace& space) {
  SequenceState s;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos >= text.size()) break;
    auto end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    s.tokens.push_back(static_cast<Token>(parse_int(text.substr(pos, end - pos), "token")));
    pos = end;
  }
  if (!space.contains(s)) {
    throw FormatError("state [" + s.to_string() + "] does not fit " + space.header());
  }
  return s;
}

// Reads the magic line and state-space line.
StateSpace read_header(std::istream& in, std::string_view magic) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != magic) {
    throw FormatError("expected '" + std::string(magic) + "' on line 1");
  }
  if (!std::getline(in, line)) throw FormatError("missing state-space line");
  std::istringstream fields(line);
  std::string field;
  std::optional<long> n, d;
  std::optional<Token> mask;
  bool mask_seen = false;
  while (fields >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("bad header field '" + field + "'");
    const std::string_view key = std::string_view(field).substr(0, eq);
    const std::string_view value = std::string_view(field).substr(eq + 1);
    if (key == "n") {
      n = parse_int(value, "n");
    } else if (key == "d") {
      d = parse_int(value, "d");
    } else if (key == "mask") {
      mask_seen = true;
      if (value != "none") mask = static_cast<Token>(parse_int(value, "mask"));
    } else {
      throw FormatError("unknown header field '" + field + "'");
    }
  }
  if (!n || !d || !mask_seen) throw FormatError("header needs n=, d= and mask=");
  return StateSpace(static_cast<int>(*n), static_cast<int>(*d), mask);
}

template <class Fn>
void for_each_row(std::istream& in, std::size_t fields, Fn&& fn) {
  std::string line;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto parts = split_fields(body);
    if (parts.size() != fields) {
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(fields) +
                        " fields");
    }
    fn(parts);
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("bad number '" + std::string(text) + "'");
  }
  return v;
}

void write_coupling(std::ostream& out, const PairCoupling& c) {
  const PairCoupling canon = c.canonicalized() ? c : normalize_coupling(c);
  out << kCouplingMagic << '\n' << canon.space().header() << '\n';
  for (const auto& e : canon.entries()) {
    out << e.x0.to_string() << " | " << e.x1.to_string() << " | " << format_double(e.weight) << '\n';
  }
}

PairCoupling read_coupling(std::istream& in) {
  const StateSpace space = read_header(in, kCouplingMagic);
  std::vector<CouplingEntry> entries;
  for_each_row(in, 3, [&](const std::vector<std::string_view>& f) {
    auto x0 = parse_state(f[0], space);
    auto x1 = parse_state(f[1], space);
    const double w = parse_double(f[2]);
    entries.push_back({std::move(x0), std::move(x1), w});
  });
  return normalize_coupling(PairCoupling(space, std::move(entries)));
}

void write_distribution(std::ostream& out, const SparseDistribution& p) {
  out << kDistMagic << '\n' << p.space().header() << '\n';
  for (const auto& [s, w] : p.entries()) out << s.to_string() << " | " << format_double(w) << '\n';
}

void write_distribution(std::ostream& out, const DenseDistribution& p) {
  out << kDistMagic << '\n' << p.space().header() << '\n';
  const auto w = p.weights();
  for (std::uint64_t i = 0; i < w.size(); ++i) {
    out << p.space().state_at(i).to_string() << " | " << format_double(w[i]) << '\n';
  }
}

SparseDistribution read_distribution(std::istream& in) {
  const StateSpace space = read_header(in, kDistMagic);
  SparseDistribution::Map m;
  for_each_row(in, 2, [&](const std::vector<std::string_view>& f) {
    m[parse_state(f[0], space)] += parse_double(f[1]);
  });
  std::erase_if(m, [](const auto& kv) { return kv.second == 0.0; });
  return SparseDistribution::normalized(space, std::move(m));
}

void write_kernel(std::ostream& out, const DenseKernel& k) {
  out << kKernelMagic << '\n' << k.space().header() << '\n';
  for (const auto& [x0, row] : k.rows()) {
    for (std::uint64_t i = 0; i < row.size(); ++i) {
      if (row[i] > 0.0) {
        out << x0.to_string() << " | " << k.space().state_at(i).to_string() << " | "
            << format_double(row[i]) << '\n';
      }
    }
  }
}

DenseKernel read_kernel(std::istream& in, std::uint64_t dense_cap) {
  const StateSpace space = read_header(in, kKernelMagic);
  DenseKernel k(space, dense_cap);
  std::map<SequenceState, std::vector<double>> rows;
  for_each_row(in, 3, [&](const std::vector<std::string_view>& f) {
    auto& row = rows[parse_state(f[0], space)];
    if (row.empty()) row.assign(space.cardinality(), 0.0);
    row[space.index_of(parse_state(f[1], space))] += parse_double(f[2]);
  });
  for (auto& [x0, row] : rows) k.set_row(x0, std::move(row));
  return k;
}

void write_samples(std::ostream& out, const StateSpace& space,
                   const std::vector<SequenceState>& samples) {
  out << kSamplesMagic << '\n' << space.header() << '\n';
  for (const auto& s : samples) out << s.to_string() << '\n';
}

std::vector<SequenceState> read_samples(std::istream& in, StateSpace* space_out) {
  const StateSpace space = read_header(in, kSamplesMagic);
  std::vector<SequenceState> out;
  for_each_row(in, 1, [&](const std::vector<std::string_view>& f) {
    out.push_back(parse_state(f[0], space));
  });
  if (space_out) *space_out = space;
  return out;
}

void write_trajectories(std::ostream& out, const StateSpace& space,
                        const std::vector<std::vector<SequenceState>>& paths) {
  out << kTrajectoriesMagic << '\n' << space.header() << '\n';
  for (const auto& path : paths) {
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i) out << " | ";
      out << path[i].to_string();
    }
    out << '\n';
  }
}

PairCoupling load_coupling(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return read_coupling(in);
}

SparseDistribution load_distribution(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return read_distribution(in);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace redi
