#pragma once

#include "otfs/episodes.hpp"
#include "otfs/pretrain.hpp"

#include <string>

namespace otfs {

/// Reads an embedding file. Paths ending in ".csv" are parsed as
/// "label,e0,...,e{d-1}" text (label -1 meaning unlabeled); everything else as
/// the EMB1 binary layout: magic "EMB1", little-endian u32 n, d, label flag,
/// n*d little-endian f32 row-major, then n little-endian u32 labels when
/// flagged. Malformed input raises FormatError with the offending byte
/// offset.
LabeledEmbeddingSet read_embeddings(const std::string& path);

/// Inverse of read_embeddings; write then read is the identity up to 32-bit
/// float precision.
void write_embeddings(const LabeledEmbeddingSet& set, const std::string& path);

/// Encoder parameter files: magic "ENC1", u32 d_in, d_out, then the weight
/// matrix row-major and the bias, all little-endian f32.
void write_encoder(const LinearEncoder& encoder, const std::string& path);
LinearEncoder read_encoder(const std::string& path);

}  // namespace otfs
