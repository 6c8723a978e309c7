#include "flatdiv/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace flatdiv {
namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_row_major(std::ostream& os, const DenseMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

void read_row_major(std::istream& is, DenseMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double v = 0;
      is.read(reinterpret_cast<char*>(&v), sizeof v);
      m(r, c) = v;
    }
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(model.d_in()));
  write_u32(os, static_cast<std::uint32_t>(model.hidden()));
  write_u32(os, static_cast<std::uint32_t>(model.classes()));
  write_row_major(os, model.W1);
  write_row_major(os, DenseMatrix(model.b1.transpose()));
  write_row_major(os, model.W2);
  write_row_major(os, DenseMatrix(model.b2.transpose()));
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("not a flatdiv checkpoint: " + path.string());
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: file has v" + std::to_string(version) +
                             ", tool expects v" + std::to_string(kCheckpointVersion));
  const auto d_in = static_cast<int>(read_u32(is));
  const auto hidden = static_cast<int>(read_u32(is));
  const auto classes = static_cast<int>(read_u32(is));
  if (!is || d_in < 1 || hidden < 1 || classes < 2)
    throw std::runtime_error("corrupt checkpoint header: " + path.string());
  MlpModel m = MlpModel::zeros(d_in, hidden, classes);
  read_row_major(is, m.W1);
  DenseMatrix b1(1, hidden), b2(1, classes);
  read_row_major(is, b1);
  m.b1 = b1.row(0);
  read_row_major(is, m.W2);
  read_row_major(is, b2);
  m.b2 = b2.row(0);
  if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
  return m;
}

}  // namespace flatdiv
