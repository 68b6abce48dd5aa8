#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsvqa/tensor.h"

namespace dsvqa {

/// Unreadable or structurally malformed manifest.
class ManifestError : public Error {
 public:
  using Error::Error;
};

struct ManifestEntry {
  std::string video_id;
  double mos = 0.0;
  std::array<double, 2> mos_scale{0.0, 1.0};
  std::string frames_path;     // T x D or T x D x H x W frame embeddings
  std::string fragments_path;  // C x T' x H' x W' fragment features
  std::string clip_path;       // optional C x T x H x W clip volume
  std::size_t num_frames = 0;
  std::string split;           // train | val | test, empty when unassigned
  std::string dataset;
};

struct TextEmbeddingPaths {
  std::string guide;
  std::string pos;
  std::string neg;
};

struct Manifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::vector<ManifestEntry> entries;
  TextEmbeddingPaths text_embeddings;
  std::string encoder;  // optional provenance of the embeddings
  /// Directory relative paths are resolved against (not serialized).
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
};

Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);
nlohmann::json manifest_to_json(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

struct ValidationIssue {
  std::string video_id;  // empty for manifest-level issues
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

/// Checks every entry and referenced file. Never throws for bad content.
ValidationReport validate_manifest(const Manifest& m);

}  // namespace dsvqa
