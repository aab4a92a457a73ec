#include "ecgid/gallery_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ecgid/date.hpp"
#include "ecgid/errors.hpp"

namespace ecgid {
namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kIdBytes = 32;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_id(std::ostream& os, const std::string& id, const char* what) {
  if (id.size() > kIdBytes) {
    throw IoError(std::string(what) + " '" + id + "' exceeds " +
                  std::to_string(kIdBytes) + " bytes");
  }
  char buf[kIdBytes] = {};
  std::memcpy(buf, id.data(), id.size());
  os.write(buf, kIdBytes);
}

std::string read_id(std::istream& is) {
  char buf[kIdBytes];
  is.read(buf, kIdBytes);
  std::size_t len = 0;
  while (len < kIdBytes && buf[len] != '\0') ++len;
  return std::string(buf, len);
}

template <typename T>
void write_le(std::ostream& os, T v) {
  // Build target is little-endian; plain byte copy keeps the format exact.
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

std::vector<EmbeddingRecord> load_embeddings_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line.rfind("dim=", 0) != 0) {
    throw ParseError(path + ": expected 'dim=<D>' header, got '" + line + "'");
  }
  const long dim = std::strtol(line.c_str() + 4, nullptr, 10);
  if (dim <= 0) throw ParseError(path + ": invalid dimension in header");

  std::vector<EmbeddingRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    EmbeddingRecord rec;
    std::string date_str, values;
    if (!std::getline(ls, rec.subject_id, '\t') ||
        !std::getline(ls, rec.exam_id, '\t') ||
        !std::getline(ls, date_str, '\t') || !std::getline(ls, values)) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 4 tab-separated fields");
    }
    rec.date = parse_date(date_str);
    rec.embedding.resize(dim);
    const char* p = values.c_str();
    for (long i = 0; i < dim; ++i) {
      char* end = nullptr;
      rec.embedding[i] = std::strtod(p, &end);
      if (end == p) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": expected " + std::to_string(dim) +
                         " vector components");
      }
      p = end;
      if (*p == ',') ++p;
    }
    if (*p != '\0') {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": trailing data after " + std::to_string(dim) +
                       " components");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_embeddings_text(const std::string& path,
                          const std::vector<EmbeddingRecord>& records) {
  std::ofstream outf(path, std::ios::trunc);
  if (!outf) throw IoError("cannot write embedding file " + path);
  const Eigen::Index dim = records.empty() ? 0 : records[0].embedding.size();
  outf << "dim=" << dim << '\n';
  for (const auto& r : records) {
    if (r.embedding.size() != dim) {
      throw DimensionError("save_embeddings_text: mixed dimensions");
    }
    outf << r.subject_id << '\t' << r.exam_id << '\t' << format_date(r.date)
         << '\t';
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (i) outf << ',';
      outf << format_double(r.embedding[i]);
    }
    outf << '\n';
  }
  if (!outf) throw IoError("write failed for " + path);
}

std::vector<EmbeddingRecord> load_embeddings_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path + ": missing EMB1 magic");
  }
  const auto dim = read_le<std::uint32_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  if (!in || dim == 0) throw ParseError(path + ": bad EMB1 header");

  std::vector<EmbeddingRecord> out;
  out.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    EmbeddingRecord rec;
    rec.subject_id = read_id(in);
    rec.exam_id = read_id(in);
    rec.date.days = read_le<std::int32_t>(in);
    rec.embedding.resize(dim);
    in.read(reinterpret_cast<char*>(rec.embedding.data()),
            static_cast<std::streamsize>(sizeof(double) * dim));
    if (!in) {
      throw ParseError(path + ": truncated record " + std::to_string(n));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_embeddings_binary(const std::string& path,
                            const std::vector<EmbeddingRecord>& records) {
  std::ofstream outf(path, std::ios::binary | std::ios::trunc);
  if (!outf) throw IoError("cannot write embedding file " + path);
  const Eigen::Index dim = records.empty() ? 0 : records[0].embedding.size();
  outf.write(kMagic, 4);
  write_le<std::uint32_t>(outf, static_cast<std::uint32_t>(dim));
  write_le<std::uint64_t>(outf, records.size());
  for (const auto& r : records) {
    if (r.embedding.size() != dim) {
      throw DimensionError("save_embeddings_binary: mixed dimensions");
    }
    write_id(outf, r.subject_id, "subject_id");
    write_id(outf, r.exam_id, "exam_id");
    write_le<std::int32_t>(outf, r.date.days);
    outf.write(reinterpret_cast<const char*>(r.embedding.data()),
               static_cast<std::streamsize>(sizeof(double) * dim));
  }
  if (!outf) throw IoError("write failed for " + path);
}

std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file " + path);
  char magic[4] = {};
  in.read(magic, 4);
  in.close();
  if (std::memcmp(magic, kMagic, 4) == 0) return load_embeddings_binary(path);
  return load_embeddings_text(path);
}

}  // namespace ecgid
