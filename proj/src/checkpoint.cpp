#include "protorec/checkpoint.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "protorec/errors.hpp"

namespace protorec {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

namespace {

constexpr int kVersion = 1;

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << format_double(row[c]);
    out << '\n';
  }
}

double parse_double(const std::string& tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError(fmt::format("checkpoint: bad number '{}'", tok));
  return v;
}

Matrix read_matrix(std::istream& in, const char* expected) {
  std::string tag, name;
  std::size_t rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "matrix" || name != expected)
    throw DataError(fmt::format("checkpoint: expected matrix {}", expected));
  Matrix m(rows, cols);
  std::string tok;
  for (double& v : m.values()) {
    if (!(in >> tok)) throw DataError(fmt::format("checkpoint: truncated matrix {}", expected));
    v = parse_double(tok);
  }
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  out << "protorec-checkpoint " << kVersion << '\n';
  out << "variant " << to_string(p.variant) << '\n';
  out << "filter " << ckpt.filter.k_u << ' ' << ckpt.filter.k_t << '\n';
  out << "config_hash " << (ckpt.config_hash.empty() ? "-" : ckpt.config_hash) << '\n';
  write_matrix(out, "user_factors", p.user_factors);
  write_matrix(out, "item_factors", p.item_factors);
  if (p.variant == Variant::protomf) {
    write_matrix(out, "user_prototypes", p.user_prototypes);
    write_matrix(out, "item_prototypes", p.item_prototypes);
    write_matrix(out, "user_map", p.user_map);
    write_matrix(out, "item_map", p.item_map);
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string tag, value;
  int version = 0;
  if (!(in >> tag >> version) || tag != "protorec-checkpoint")
    throw DataError("checkpoint: missing header");
  if (version != kVersion)
    throw DataError(fmt::format("checkpoint: unsupported version {}", version));
  if (!(in >> tag >> value) || tag != "variant") throw DataError("checkpoint: missing variant");
  try {
    ckpt.params.variant = parse_variant(value);
  } catch (const UsageError& e) {
    throw DataError(fmt::format("checkpoint: {}", e.what()));
  }
  if (!(in >> tag >> ckpt.filter.k_u >> ckpt.filter.k_t) || tag != "filter")
    throw DataError("checkpoint: missing filter");
  if (!(in >> tag >> value) || tag != "config_hash") throw DataError("checkpoint: missing config_hash");
  ckpt.config_hash = value == "-" ? "" : value;
  auto& p = ckpt.params;
  p.user_factors = read_matrix(in, "user_factors");
  p.item_factors = read_matrix(in, "item_factors");
  if (p.user_factors.cols() != p.item_factors.cols())
    throw DataError("checkpoint: user/item latent dimensions differ");
  if (p.variant == Variant::protomf) {
    p.user_prototypes = read_matrix(in, "user_prototypes");
    p.item_prototypes = read_matrix(in, "item_prototypes");
    p.user_map = read_matrix(in, "user_map");
    p.item_map = read_matrix(in, "item_map");
    const auto d = p.dim(), lu = p.user_prototypes.rows(), lt = p.item_prototypes.rows();
    if (p.user_prototypes.cols() != d || p.item_prototypes.cols() != d ||
        p.user_map.rows() != lu || p.user_map.cols() != lt || p.item_map.rows() != lt ||
        p.item_map.cols() != lu)
      throw DataError("checkpoint: inconsistent prototype block shapes");
    try {
      ckpt.filter.validate(lu, lt);
    } catch (const UsageError& e) {
      throw DataError(fmt::format("checkpoint: {}", e.what()));
    }
  }
  if (!(in >> tag) || tag != "end") throw DataError("checkpoint: missing end marker");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open checkpoint {}", path.string()));
  return read_checkpoint(in);
}

}  // namespace protorec
