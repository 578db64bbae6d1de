#include "ragseg/formats.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "byte_io.hpp"

namespace ragseg {
namespace {

using nlohmann::json;

constexpr std::uint32_t kFeatureVersion = 1;

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

// Calls fn(line, line_number) for every nonempty line.
template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line, number);
  }
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    parse_fail(where, e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_feature_file(const FeatureFile& file) {
  const auto& m = file.map;
  const json header = {{"dtype", "f32le"},
                       {"dims", {m.channels(), m.rows(), m.cols()}},
                       {"extractor", file.extractor},
                       {"image_id", file.image_id}};
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.bytes("KNFP");
  w.put<std::uint32_t>(kFeatureVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  w.floats(std::span<const float>(m.values().data(), static_cast<std::size_t>(m.values().size())));
  return std::move(w.buffer());
}

FeatureFile decode_feature_file(std::span<const std::uint8_t> bytes, const std::string& origin) {
  detail::ByteReader r(bytes, Error(ErrorCode::ParseError, origin + ": feature file truncated"));
  if (r.bytes(4) != "KNFP") parse_fail(origin + "@0", "expected magic KNFP");
  if (const auto v = r.get<std::uint32_t>(); v != kFeatureVersion) {
    parse_fail(origin + "@4", "unsupported feature file version " + std::to_string(v));
  }
  const auto header_len = r.get<std::uint32_t>();
  const std::size_t header_at = r.position();
  const json header = parse_json(std::string(r.bytes(header_len)), origin + "@" + std::to_string(header_at));

  FeatureFile out;
  std::array<std::int64_t, 3> dims{};
  try {
    if (header.at("dtype").get<std::string>() != "f32le") parse_fail(origin, "dtype must be f32le");
    const auto& d = header.at("dims");
    if (!d.is_array() || d.size() != 3) parse_fail(origin, "dims must be [d, h, w]");
    for (std::size_t i = 0; i < 3; ++i) dims[i] = d[i].get<std::int64_t>();
    out.extractor = header.value("extractor", std::string());
    out.image_id = header.at("image_id").get<std::uint64_t>();
  } catch (const json::exception& e) {
    parse_fail(origin + "@" + std::to_string(header_at), std::string("bad header: ") + e.what());
  }
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) parse_fail(origin, "dims must all be >= 1");

  const auto count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  const std::size_t payload_at = r.position();
  if (r.remaining() != count * sizeof(float)) {
    parse_fail(origin + "@" + std::to_string(payload_at), "payload holds " + std::to_string(r.remaining()) +
                                                              " bytes, header implies " +
                                                              std::to_string(count * sizeof(float)));
  }
  std::vector<float> payload(count);
  r.floats(payload);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(payload[i])) {
      parse_fail(origin + "@" + std::to_string(payload_at + i * sizeof(float)), "non-finite feature value");
    }
  }
  out.map = FeatureMap::from_buffer(payload, dims[0], dims[1], dims[2]);
  return out;
}

void write_feature_file(const std::string& path, const FeatureFile& file) {
  detail::write_file(path, encode_feature_file(file));
}

FeatureFile read_feature_file(const std::string& path) { return decode_feature_file(detail::read_file(path), path); }

std::vector<std::pair<std::uint64_t, std::uint64_t>> encode_rle(const MaskGrid& bits) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
  const auto n = static_cast<std::uint64_t>(bits.size());
  for (std::uint64_t i = 0; i < n;) {
    if (bits.data()[i] == 0) {
      ++i;
      continue;
    }
    const std::uint64_t start = i;
    while (i < n && bits.data()[i] != 0) ++i;
    runs.emplace_back(start, i - start);
  }
  return runs;
}

MaskGrid decode_rle(std::span<const std::pair<std::uint64_t, std::uint64_t>> runs, Eigen::Index rows,
                    Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::ShapeMismatch, "mask dims must be >= 1");
  MaskGrid bits = MaskGrid::Zero(rows, cols);
  const auto n = static_cast<std::uint64_t>(bits.size());
  for (const auto& [start, length] : runs) {
    if (start > n || length > n - start) throw Error(ErrorCode::ShapeMismatch, "RLE run exceeds the mask");
    std::fill_n(bits.data() + start, length, std::uint8_t{1});
  }
  return bits;
}

std::string format_mask_entry(const MaskEntry& entry) {
  json j = {{"image_id", entry.image_id},
            {"h", entry.mask.rows()},
            {"w", entry.mask.cols()},
            {"rle", json::array()}};
  for (const auto& [start, length] : encode_rle(entry.mask.bits)) j["rle"].push_back({start, length});
  if (entry.class_name) j["class"] = *entry.class_name;
  if (entry.mask.mask_score) j["mask_score"] = *entry.mask.mask_score;
  return j.dump();
}

MaskEntry parse_mask_entry(const std::string& line) {
  const json j = parse_json(line, "mask entry");
  MaskEntry e;
  try {
    e.image_id = j.at("image_id").get<std::uint64_t>();
    const auto h = j.at("h").get<std::int64_t>();
    const auto w = j.at("w").get<std::int64_t>();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
    for (const auto& run : j.at("rle")) {
      if (!run.is_array() || run.size() != 2) parse_fail("mask entry", "rle items must be [start, length]");
      runs.emplace_back(run[0].get<std::uint64_t>(), run[1].get<std::uint64_t>());
    }
    e.mask.bits = decode_rle(runs, h, w);
    if (j.contains("class") && !j["class"].is_null()) e.class_name = j["class"].get<std::string>();
    if (j.contains("mask_score") && !j["mask_score"].is_null()) {
      const auto score = j["mask_score"].get<float>();
      if (!(score >= 0.0f && score <= 1.0f)) parse_fail("mask entry", "mask_score must be in [0,1]");
      e.mask.mask_score = score;
    }
  } catch (const json::exception& ex) {
    parse_fail("mask entry", ex.what());
  }
  return e;
}

std::vector<MaskEntry> read_mask_manifest(const std::string& path) {
  std::vector<MaskEntry> out;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    try {
      out.push_back(parse_mask_entry(line));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

void write_mask_manifest(const std::string& path, std::span<const MaskEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  for (const auto& e : entries) out << format_mask_entry(e) << '\n';
}

const std::vector<double>& BaseProbabilityFile::at(std::uint64_t image_id, std::uint64_t mask_index) const {
  const auto it = probs.find({image_id, mask_index});
  if (it == probs.end()) {
    throw Error(ErrorCode::InvalidDataset, "no base probabilities for image " + std::to_string(image_id) +
                                               " mask " + std::to_string(mask_index));
  }
  return it->second;
}

BaseProbabilityFile read_probability_file(const std::string& path) {
  BaseProbabilityFile out;
  bool header_seen = false;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    const std::string where = path + ":" + std::to_string(number);
    const json j = parse_json(line, where);
    try {
      if (!header_seen) {
        out.classes = j.at("classes").get<std::vector<std::string>>();
        if (out.classes.empty()) parse_fail(where, "header lists no classes");
        header_seen = true;
        return;
      }
      auto probs = j.at("probs").get<std::vector<double>>();
      if (probs.size() != out.classes.size()) {
        throw Error(ErrorCode::ShapeMismatch, where + ": " + std::to_string(probs.size()) +
                                                  " probabilities for " + std::to_string(out.classes.size()) +
                                                  " classes");
      }
      const auto key = std::make_pair(j.at("image_id").get<std::uint64_t>(), j.at("mask_index").get<std::uint64_t>());
      if (!out.probs.emplace(key, std::move(probs)).second) parse_fail(where, "duplicate (image_id, mask_index)");
    } catch (const json::exception& e) {
      parse_fail(where, e.what());
    }
  });
  if (!header_seen) parse_fail(path, "missing class header line");
  return out;
}

void write_probability_file(const std::string& path, const BaseProbabilityFile& file) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << json{{"classes", file.classes}}.dump() << '\n';
  for (const auto& [key, probs] : file.probs) {
    out << json{{"image_id", key.first}, {"mask_index", key.second}, {"probs", probs}}.dump() << '\n';
  }
}

void write_pgm(const std::string& path, const SemanticMap& map) {
  std::ostringstream header;
  header << "P5\n" << map.cols() << ' ' << map.rows() << "\n65535\n";
  std::string body = header.str();
  body.reserve(body.size() + 2 * static_cast<std::size_t>(map.labels.size()));
  for (Eigen::Index i = 0; i < map.labels.size(); ++i) {
    const std::uint32_t label = map.labels.data()[i];
    if (label != kVoidLabel && label >= 65535) {
      throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(label) + " does not fit a 16-bit PGM");
    }
    const std::uint16_t v = label == kVoidLabel ? 65535 : static_cast<std::uint16_t>(label);
    body.push_back(static_cast<char>(v >> 8));
    body.push_back(static_cast<char>(v & 0xff));
  }
  detail::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(body.data()),
                                                         body.size()));
}

SemanticMap read_pgm(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::size_t pos = 0;
  const auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P5") parse_fail(path, "expected binary PGM (P5)");
  long cols = 0, rows = 0, maxval = 0;
  try {
    cols = std::stol(token());
    rows = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    parse_fail(path, "malformed PGM header");
  }
  ++pos;  // single whitespace before raster
  if (cols < 1 || rows < 1 || maxval < 1 || maxval > 65535) parse_fail(path, "unsupported PGM dimensions or maxval");
  const std::size_t width = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (bytes.size() < pos + n * width) parse_fail(path + "@" + std::to_string(pos), "PGM raster truncated");

  SemanticMap map = SemanticMap::filled(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t v =
        width == 2 ? (std::uint32_t{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1] : bytes[pos + i];
    map.labels.data()[i] = v == static_cast<std::uint32_t>(maxval) && maxval == 65535 ? kVoidLabel : v;
  }
  return map;
}

}  // namespace ragseg
