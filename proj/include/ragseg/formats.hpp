#pragma once

// Interchange formats: KNFP feature files, JSON-lines mask manifests and base
// probability files, 16-bit PGM label maps.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ragseg/features.hpp"
#include "ragseg/segmentation.hpp"

namespace ragseg {

struct FeatureFile {
  FeatureMap map;
  std::string extractor;
  std::uint64_t image_id = 0;
};

/// "KNFP" | version u32 | header_len u32 | JSON header | f32le payload (channel-major).
std::vector<std::uint8_t> encode_feature_file(const FeatureFile& file);
FeatureFile decode_feature_file(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
void write_feature_file(const std::string& path, const FeatureFile& file);
FeatureFile read_feature_file(const std::string& path);

/// One line of a mask manifest.
struct MaskEntry {
  std::uint64_t image_id = 0;
  InstanceMask mask;
  std::optional<std::string> class_name;
};

/// Run-length pairs [start, length] over row-major pixels.
std::vector<std::pair<std::uint64_t, std::uint64_t>> encode_rle(const MaskGrid& bits);
MaskGrid decode_rle(std::span<const std::pair<std::uint64_t, std::uint64_t>> runs, Eigen::Index rows,
                    Eigen::Index cols);

std::string format_mask_entry(const MaskEntry& entry);
MaskEntry parse_mask_entry(const std::string& line);
std::vector<MaskEntry> read_mask_manifest(const std::string& path);
void write_mask_manifest(const std::string& path, std::span<const MaskEntry> entries);

/// Header line {"classes": [...]} followed by {"image_id","mask_index","probs"} lines.
struct BaseProbabilityFile {
  std::vector<std::string> classes;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<double>> probs;

  const std::vector<double>& at(std::uint64_t image_id, std::uint64_t mask_index) const;
};

BaseProbabilityFile read_probability_file(const std::string& path);
void write_probability_file(const std::string& path, const BaseProbabilityFile& file);

/// Binary P5 with maxval 65535; kVoidLabel is written as 65535.
void write_pgm(const std::string& path, const SemanticMap& map);
SemanticMap read_pgm(const std::string& path);

}  // namespace ragseg
