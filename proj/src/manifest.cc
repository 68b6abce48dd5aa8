#include "dsvqa/manifest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dsvqa/tensor_file.h"

namespace dsvqa {

using nlohmann::json;

std::filesystem::path Manifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ManifestError(where + ": missing key \"" + key + "\"");
  }
  return j.at(key);
}

std::string get_string(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_string()) throw ManifestError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

double get_number(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_number()) throw ManifestError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::size_t get_count(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ManifestError(where + "." + key + ": expected an integer");
  }
  const auto n = v.get<std::int64_t>();
  if (n < 0) throw ManifestError(where + "." + key + ": must be non-negative");
  return static_cast<std::size_t>(n);
}

ManifestEntry parse_entry(const json& e, const std::string& where) {
  if (!e.is_object()) throw ManifestError(where + ": expected an object");
  ManifestEntry entry;
  entry.video_id = get_string(e, "video_id", where);
  entry.mos = get_number(e, "mos", where);
  const auto& scale = require(e, "mos_scale", where);
  if (!scale.is_array() || scale.size() != 2 || !scale[0].is_number() || !scale[1].is_number()) {
    throw ManifestError(where + ".mos_scale: expected [lo, hi]");
  }
  entry.mos_scale = {scale[0].get<double>(), scale[1].get<double>()};
  entry.frames_path = get_string(e, "frames_path", where);
  entry.fragments_path = get_string(e, "fragments_path", where);
  if (e.contains("clip_path") && !e["clip_path"].is_null()) {
    entry.clip_path = get_string(e, "clip_path", where);
  }
  entry.num_frames = get_count(e, "num_frames", where);
  if (e.contains("split") && !e["split"].is_null()) entry.split = get_string(e, "split", where);
  if (e.contains("dataset") && !e["dataset"].is_null()) {
    entry.dataset = get_string(e, "dataset", where);
  }
  return entry;
}

}  // namespace

Manifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ManifestError("manifest: expected a JSON object");
  Manifest m;
  m.base_dir = base_dir;
  m.schema_version = static_cast<int>(get_count(j, "schema_version", "manifest"));
  const auto& entries = require(j, "entries", "manifest");
  if (!entries.is_array()) throw ManifestError("manifest.entries: expected an array");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    m.entries.push_back(parse_entry(entries[i], "entries[" + std::to_string(i) + "]"));
  }
  const auto& text = require(j, "text_embeddings", "manifest");
  m.text_embeddings.guide = get_string(text, "guide", "text_embeddings");
  m.text_embeddings.pos = get_string(text, "pos", "text_embeddings");
  m.text_embeddings.neg = get_string(text, "neg", "text_embeddings");
  if (j.contains("encoder") && j["encoder"].is_string()) m.encoder = j["encoder"].get<std::string>();
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

json manifest_to_json(const Manifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json je = {{"video_id", e.video_id},
               {"mos", e.mos},
               {"mos_scale", {e.mos_scale[0], e.mos_scale[1]}},
               {"frames_path", e.frames_path},
               {"fragments_path", e.fragments_path},
               {"num_frames", e.num_frames},
               {"split", e.split},
               {"dataset", e.dataset}};
    if (!e.clip_path.empty()) je["clip_path"] = e.clip_path;
    entries.push_back(std::move(je));
  }
  json j = {{"schema_version", m.schema_version},
            {"entries", std::move(entries)},
            {"text_embeddings",
             {{"guide", m.text_embeddings.guide},
              {"pos", m.text_embeddings.pos},
              {"neg", m.text_embeddings.neg}}}};
  if (!m.encoder.empty()) j["encoder"] = m.encoder;
  return j;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& i : issues) {
    if (!i.video_id.empty()) os << '[' << i.video_id << "] ";
    os << i.field << ": " << i.message << '\n';
  }
  return os.str();
}

namespace {

// Reads only the header-derived shape when the file parses; records an issue
// otherwise.
std::optional<Shape> probe_tensor(const Manifest& m, const std::string& rel,
                                  const std::string& id, const std::string& field,
                                  ValidationReport& report) {
  if (rel.empty()) {
    report.issues.push_back({id, field, "path is empty"});
    return std::nullopt;
  }
  const auto path = m.resolve(rel);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    report.issues.push_back({id, field, "file not found: " + path.string()});
    return std::nullopt;
  }
  try {
    const auto t = read_tensor(path);
    bool finite = std::visit([](const auto& x) { return x.all_finite(); }, t);
    if (!finite) {
      report.issues.push_back({id, field, "tensor contains NaN or Inf"});
      return std::nullopt;
    }
    return shape_of(t);
  } catch (const std::exception& e) {
    report.issues.push_back({id, field, e.what()});
    return std::nullopt;
  }
}

}  // namespace

ValidationReport validate_manifest(const Manifest& m) {
  ValidationReport report;
  if (m.schema_version != Manifest::kSchemaVersion) {
    report.issues.push_back(
        {"", "schema_version", "unsupported schema version " + std::to_string(m.schema_version)});
  }
  if (m.entries.empty()) report.issues.push_back({"", "entries", "manifest has no entries"});

  std::optional<std::size_t> text_width;
  const std::pair<const char*, const std::string*> text_fields[] = {
      {"text_embeddings.guide", &m.text_embeddings.guide},
      {"text_embeddings.pos", &m.text_embeddings.pos},
      {"text_embeddings.neg", &m.text_embeddings.neg}};
  for (const auto& [field, rel] : text_fields) {
    auto shape = probe_tensor(m, *rel, "", field, report);
    if (!shape) continue;
    if (shape->size() != 1) {
      report.issues.push_back({"", field, "expected a vector, got " + shape_str(*shape)});
      continue;
    }
    if (text_width && *text_width != (*shape)[0]) {
      report.issues.push_back({"", field, "text embedding widths differ"});
    }
    text_width = (*shape)[0];
    try {
      const auto t = read_tensor_as<double>(m.resolve(*rel));
      double norm = 0;
      for (double v : t.data()) norm += v * v;
      if (!(std::sqrt(norm) > 1e-12)) report.issues.push_back({"", field, "zero embedding"});
    } catch (const std::exception&) {
    }
  }

  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const std::string id = e.video_id.empty() ? "#" + std::to_string(i) : e.video_id;
    if (e.video_id.empty()) report.issues.push_back({id, "video_id", "empty video_id"});
    if (auto [it, inserted] = seen.emplace(e.video_id, i); !inserted && !e.video_id.empty()) {
      report.issues.push_back({id, "video_id", "duplicate video_id \"" + e.video_id + "\""});
    }
    const auto [lo, hi] = e.mos_scale;
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
      report.issues.push_back({id, "mos_scale", "expected finite lo < hi"});
    } else if (!std::isfinite(e.mos) || e.mos < lo || e.mos > hi) {
      std::ostringstream os;
      os << "mos " << e.mos << " outside [" << lo << ", " << hi << "]";
      report.issues.push_back({id, "mos", os.str()});
    }
    if (!e.split.empty() && e.split != "train" && e.split != "val" && e.split != "test") {
      report.issues.push_back({id, "split", "unknown split \"" + e.split + "\""});
    }
    if (e.num_frames == 0) report.issues.push_back({id, "num_frames", "must be at least 1"});

    if (auto shape = probe_tensor(m, e.frames_path, id, "frames_path", report)) {
      if (shape->size() != 2 && shape->size() != 4) {
        report.issues.push_back(
            {id, "frames_path", "expected T x D or T x D x H x W, got " + shape_str(*shape)});
      } else {
        if ((*shape)[0] != e.num_frames) {
          report.issues.push_back({id, "frames_path",
                                   "leading extent " + std::to_string((*shape)[0]) +
                                       " != num_frames " + std::to_string(e.num_frames)});
        }
        if (text_width && (*shape)[1] != *text_width) {
          report.issues.push_back({id, "frames_path",
                                   "embedding width " + std::to_string((*shape)[1]) +
                                       " != text width " + std::to_string(*text_width)});
        }
      }
    }
    if (auto shape = probe_tensor(m, e.fragments_path, id, "fragments_path", report)) {
      if (shape->size() != 4) {
        report.issues.push_back(
            {id, "fragments_path", "expected C x T x H x W, got " + shape_str(*shape)});
      }
    }
    if (!e.clip_path.empty()) {
      if (auto shape = probe_tensor(m, e.clip_path, id, "clip_path", report)) {
        if (shape->size() != 4) {
          report.issues.push_back(
              {id, "clip_path", "expected C x T x H x W, got " + shape_str(*shape)});
        } else if ((*shape)[1] != e.num_frames) {
          report.issues.push_back({id, "clip_path",
                                   "temporal extent " + std::to_string((*shape)[1]) +
                                       " != num_frames " + std::to_string(e.num_frames)});
        }
      }
    }
  }
  return report;
}

}  // namespace dsvqa
