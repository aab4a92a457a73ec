#pragma once

#include <string>
#include <vector>

#include "ecgid/embedding.hpp"

namespace ecgid {

/// Text embedding file: header `dim=<D>`, then per record
/// `subject_id<TAB>exam_id<TAB>YYYY-MM-DD<TAB>v1,v2,...,vD`.
/// Values are written with 17 significant digits so a write/read round trip
/// reproduces every double bit-exactly.
std::vector<EmbeddingRecord> load_embeddings_text(const std::string& path);
void save_embeddings_text(const std::string& path,
                          const std::vector<EmbeddingRecord>& records);

/// Binary embedding file: magic "EMB1", little-endian u32 dimension,
/// u64 record count, then fixed-size records of 32-byte NUL-padded
/// subject_id, 32-byte NUL-padded exam_id, i32 date (days since epoch),
/// and D little-endian f64 components.
std::vector<EmbeddingRecord> load_embeddings_binary(const std::string& path);
void save_embeddings_binary(const std::string& path,
                            const std::vector<EmbeddingRecord>& records);

/// Dispatches on the EMB1 magic, falling back to the text loader.
std::vector<EmbeddingRecord> load_embeddings(const std::string& path);

}  // namespace ecgid
