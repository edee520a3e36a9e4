#include "taskcast/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "taskcast/errors.hpp"

namespace fs = std::filesystem;

namespace taskcast {
namespace {

void warn(std::vector<std::string>* warnings, std::string msg) {
  if (warnings != nullptr) {
    warnings->push_back(std::move(msg));
  } else {
    std::cerr << "warning: " << msg << '\n';
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Dataset Dataset::subset(const std::string& split) const {
  Dataset out{class_names, feature_dim, {}};
  for (const LabeledSequence& s : sequences) {
    if (split.empty() || s.split == split) out.sequences.push_back(s);
  }
  return out;
}

void require_disjoint(const Dataset& train, const Dataset& test) {
  std::set<std::string> ids;
  for (const LabeledSequence& s : train.sequences) ids.insert(s.source_id);
  for (const LabeledSequence& s : test.sequences) {
    if (ids.count(s.source_id) != 0) {
      throw DomainError("sequence " + s.source_id + " is in both the train and test splits");
    }
  }
}

Dataset strip_null_classes(std::vector<LabeledSequence> sequences,
                           const std::vector<std::string>& class_names,
                           const std::vector<int>& null_class_ids,
                           std::vector<std::string>* warnings) {
  const std::set<int> null_ids(null_class_ids.begin(), null_class_ids.end());
  std::vector<int> remap(class_names.size(), -1);
  Dataset out;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (null_ids.count(static_cast<int>(c)) == 0) {
      remap[c] = static_cast<int>(out.class_names.size());
      out.class_names.push_back(class_names[c]);
    }
  }

  for (LabeledSequence& seq : sequences) {
    if (out.feature_dim == 0) out.feature_dim = seq.features.cols();
    if (seq.features.cols() != out.feature_dim) {
      throw ShapeError("sequence " + seq.source_id + ": feature width " +
                       std::to_string(seq.features.cols()) + " != " +
                       std::to_string(out.feature_dim));
    }
    if (seq.features.rows() != seq.labels.size()) {
      throw ShapeError("sequence " + seq.source_id + ": " + std::to_string(seq.features.rows()) +
                       " feature rows but " + std::to_string(seq.labels.size()) + " labels");
    }
    std::vector<double> kept;
    std::vector<int> labels;
    kept.reserve(seq.features.size());
    for (std::size_t t = 0; t < seq.labels.size(); ++t) {
      const int raw = seq.labels[t];
      if (raw < 0 || static_cast<std::size_t>(raw) >= class_names.size()) {
        throw DomainError("sequence " + seq.source_id + ": label " + std::to_string(raw) +
                          " outside the class list");
      }
      if (remap[static_cast<std::size_t>(raw)] < 0) continue;
      labels.push_back(remap[static_cast<std::size_t>(raw)]);
      auto row = seq.features.row(t);
      kept.insert(kept.end(), row.begin(), row.end());
    }
    const std::set<int> distinct(labels.begin(), labels.end());
    if (labels.size() < 2 || distinct.size() < 2) {
      warn(warnings, "sequence " + seq.source_id + " has fewer than 2 distinct actions after "
                     "null removal; skipped");
      continue;
    }
    const std::size_t rows = labels.size();
    seq.features = Matrix(rows, out.feature_dim, std::move(kept));
    seq.labels = std::move(labels);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

void write_feature_file(const fs::path& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  std::vector<char> buf(features.size() * 4);
  std::size_t k = 0;
  for (double v : features.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int s = 0; s < 32; s += 8) buf[k++] = static_cast<char>((bits >> s) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Matrix read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw IoError(path.string() + ": truncated header");
  const std::uint32_t rows = get_u32(bytes.data());
  const std::uint32_t cols = get_u32(bytes.data() + 4);
  const std::uint64_t expected = 8 + 4ULL * rows * cols;
  if (bytes.size() != expected) {
    throw IoError(path.string() + ": header says " + std::to_string(rows) + "x" +
                  std::to_string(cols) + " (" + std::to_string(expected) + " bytes), file has " +
                  std::to_string(bytes.size()));
  }
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + 8 + 4 * i)));
  }
  return Matrix(rows, cols, std::move(data));
}

void write_label_file(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<int> read_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    int v = 0;
    if (!(ss >> v)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": not an integer");
    }
    labels.push_back(v);
  }
  return labels;
}

DatasetManifest read_manifest(const fs::path& manifest_or_dir) {
  const fs::path file =
      fs::is_directory(manifest_or_dir) ? manifest_or_dir / kManifestName : manifest_or_dir;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.directory = file.parent_path();
  try {
    nlohmann::json j;
    in >> j;
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.null_class_ids = j.value("null_class_ids", std::vector<int>{});
    for (const auto& e : j.at("sequences")) {
      m.entries.push_back({e.at("features").get<std::string>(), e.at("labels").get<std::string>(),
                           e.at("id").get<std::string>(), e.value("split", std::string{})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest) {
  nlohmann::json j;
  j["format"] = "taskcast-dataset";
  j["version"] = 1;
  j["feature_dim"] = manifest.feature_dim;
  j["class_names"] = manifest.class_names;
  j["null_class_ids"] = manifest.null_class_ids;
  j["sequences"] = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.entries) {
    nlohmann::json s{{"id", e.sequence_id}, {"features", e.feature_file}, {"labels", e.label_file}};
    if (!e.split.empty()) s["split"] = e.split;
    j["sequences"].push_back(std::move(s));
  }
  const fs::path file = manifest.directory / kManifestName;
  std::ofstream out(file);
  if (!out) throw IoError("cannot write manifest " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to " + file.string());
}

Dataset load_dataset(const DatasetManifest& manifest, std::vector<std::string>* warnings) {
  std::vector<LabeledSequence> raw;
  raw.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    LabeledSequence seq;
    seq.source_id = e.sequence_id;
    seq.split = e.split;
    seq.features = read_feature_file(manifest.directory / e.feature_file);
    seq.labels = read_label_file(manifest.directory / e.label_file);
    if (seq.features.rows() != seq.labels.size()) {
      throw IoError("sequence " + e.sequence_id + ": " + std::to_string(seq.features.rows()) +
                    " feature rows but " + std::to_string(seq.labels.size()) + " label lines");
    }
    if (manifest.feature_dim != 0 && seq.features.cols() != manifest.feature_dim) {
      throw IoError("sequence " + e.sequence_id + ": feature width " +
                    std::to_string(seq.features.cols()) + " != manifest " +
                    std::to_string(manifest.feature_dim));
    }
    raw.push_back(std::move(seq));
  }
  Dataset out = strip_null_classes(std::move(raw), manifest.class_names, manifest.null_class_ids,
                                   warnings);
  if (out.feature_dim == 0) out.feature_dim = manifest.feature_dim;
  return out;
}

DatasetManifest save_dataset(const std::vector<LabeledSequence>& sequences,
                             const std::vector<std::string>& class_names,
                             const std::vector<int>& null_class_ids, const fs::path& directory) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  DatasetManifest m;
  m.directory = directory;
  m.class_names = class_names;
  m.null_class_ids = null_class_ids;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const LabeledSequence& s = sequences[i];
    std::string id = s.source_id.empty() ? "seq_" + std::to_string(i) : s.source_id;
    if (!ids.insert(id).second) throw IoError("duplicate sequence id " + id);
    if (m.feature_dim == 0) m.feature_dim = s.features.cols();
    ManifestEntry e{id + ".feat", id + ".labels", id, s.split};
    write_feature_file(directory / e.feature_file, s.features);
    write_label_file(directory / e.label_file, s.labels);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m);
  return m;
}

Standardizer Standardizer::fit(const Dataset& train) {
  const std::size_t dim = train.feature_dim;
  Standardizer s{Vector(dim, 0.0), Vector(dim, 1.0)};
  Vector sq(dim, 0.0);
  double count = 0.0;
  for (const LabeledSequence& seq : train.sequences) {
    for (std::size_t t = 0; t < seq.features.rows(); ++t) {
      auto row = seq.features.row(t);
      for (std::size_t d = 0; d < dim; ++d) {
        s.mean[d] += row[d];
        sq[d] += row[d] * row[d];
      }
      count += 1.0;
    }
  }
  if (count == 0.0) return s;
  for (std::size_t d = 0; d < dim; ++d) {
    s.mean[d] /= count;
    const double var = std::max(0.0, sq[d] / count - s.mean[d] * s.mean[d]);
    s.scale[d] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return s;
}

void Standardizer::apply(Dataset& data) const {
  for (LabeledSequence& seq : data.sequences) {
    require_shape(seq.features, seq.features.rows(), mean.size(), "standardizer input");
    for (std::size_t t = 0; t < seq.features.rows(); ++t) {
      auto row = seq.features.row(t);
      for (std::size_t d = 0; d < mean.size(); ++d) row[d] = (row[d] - mean[d]) * scale[d];
    }
  }
}

}  // namespace taskcast
