#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alfm/alfm.hpp"
#include "alfm/atm.hpp"
#include "alfm/corpus.hpp"

namespace alfm {

// FNV-1a 64
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t corpus_hash(const ProcessedCorpus& corpus);
std::uint64_t split_hash(const CorpusSplit& split);
std::uint64_t posterior_hash(const AtmPosterior& posterior);

// Versioned binary array: magic (4 bytes), ndims u32, dims u32..., then
// row-major little-endian f64 payload.
void write_array(const std::filesystem::path& path, const char magic[4],
                 std::span<const std::uint32_t> dims, std::span<const double> data);
std::vector<double> read_array(const std::filesystem::path& path, const char magic[4],
                               std::vector<std::uint32_t>& dims);

// key=value meta files
using MetaMap = std::map<std::string, std::string>;
void write_meta(const std::filesystem::path& path, const MetaMap& meta);
MetaMap read_meta(const std::filesystem::path& path);

// Corpus directory: vocab.tsv, users.tsv, items.tsv, reviews.bin
void save_corpus(const std::filesystem::path& dir, const ProcessedCorpus& corpus);
ProcessedCorpus load_corpus(const std::filesystem::path& dir);

// Split manifests: train.ids / valid.ids / test.ids + split.meta
void save_split(const std::filesystem::path& dir, const CorpusSplit& split);
CorpusSplit load_split(const std::filesystem::path& dir, const ProcessedCorpus& corpus);

// Posterior directory: atm.meta + one "ATM1" array per parameter
void save_posterior(const std::filesystem::path& dir, const AtmPosterior& posterior,
                    const AtmHyperparams& hyper, std::uint64_t corpus_hash_value);
struct LoadedPosterior {
  AtmPosterior posterior;
  AtmHyperparams hyper;
  std::uint64_t corpus_hash = 0;
};
LoadedPosterior load_posterior(const std::filesystem::path& dir);

// Model directory: alfm.meta + "ALFM" arrays
void save_model(const std::filesystem::path& dir, const AlfmModel& model,
                std::uint64_t posterior_hash_value);
struct LoadedModel {
  AlfmModel model;
  std::uint64_t posterior_hash = 0;
};
LoadedModel load_model(const std::filesystem::path& dir);

// Feature cache keyed by (posterior hash, split hash)
void save_features(const std::filesystem::path& path, const FeatureTable& features,
                   std::uint64_t posterior_hash_value, std::uint64_t split_hash_value);
struct LoadedFeatures {
  FeatureTable features;
  std::uint64_t posterior_hash = 0;
  std::uint64_t split_hash = 0;
};
LoadedFeatures load_features(const std::filesystem::path& path);

}  // namespace alfm
