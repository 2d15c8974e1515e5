#include "refrm3d/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace refrm3d {

static_assert(std::endian::native == std::endian::little,
              "archive IO assumes a little-endian host");
static_assert(sizeof(float) == 4, "archive payloads are 4-byte floats");

namespace {

constexpr char kMagic[4] = {'V', 'X', 'A', '1'};

std::int64_t record_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) fail(ErrorCode::CorruptFile, "archive shape has extent <= 0");
    n *= d;
  }
  return n;
}

}  // namespace

void write_param_archive(const std::filesystem::path& path,
                         const ParamArchive& archive) {
  nlohmann::json manifest;
  manifest["format"] = "vxa1";
  manifest["meta"] = archive.meta.is_null() ? nlohmann::json::object()
                                            : archive.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& record : archive.tensors) {
    const std::int64_t numel = record_numel(record.shape);
    if (numel != static_cast<std::int64_t>(record.values.size())) {
      fail(ErrorCode::ShapeError, "archive record '" + record.name +
                                      "': values do not fill the shape");
    }
    manifest["tensors"].push_back({{"name", record.name},
                                   {"shape", record.shape},
                                   {"offset", offset}});
    offset += numel;
  }
  const std::string header = manifest.dump();
  if (header.size() > 0xffffffffull) {
    fail(ErrorCode::IoError, "archive manifest too large");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  }
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t header_len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& record : archive.tensors) {
    out.write(reinterpret_cast<const char*>(record.values.data()),
              static_cast<std::streamsize>(record.values.size() *
                                           sizeof(float)));
  }
  if (!out) {
    fail(ErrorCode::IoError, "short write to " + path.string());
  }
}

ParamArchive read_param_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) {
    fail(ErrorCode::CorruptFile, "archive shorter than its header");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::CorruptFile, "bad archive magic");
  }
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic),
              sizeof(header_len));
  const std::size_t header_start = sizeof(kMagic) + sizeof(std::uint32_t);
  if (bytes.size() < header_start + header_len) {
    fail(ErrorCode::CorruptFile, "archive manifest truncated");
  }

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + header_start,
                                     bytes.begin() + header_start +
                                         header_len);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::CorruptFile, "archive manifest is not valid JSON");
  }
  if (!manifest.is_object() || manifest.value("format", "") != "vxa1" ||
      !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    fail(ErrorCode::CorruptFile, "archive manifest missing required fields");
  }

  ParamArchive archive;
  archive.meta = manifest.value("meta", nlohmann::json::object());
  std::int64_t expected_offset = 0;
  for (const auto& entry : manifest["tensors"]) {
    if (!entry.is_object() || !entry.contains("name") ||
        !entry.contains("shape") || !entry.contains("offset")) {
      fail(ErrorCode::CorruptFile, "archive tensor entry malformed");
    }
    TensorRecord record;
    record.name = entry["name"].get<std::string>();
    record.shape = entry["shape"].get<std::vector<std::int64_t>>();
    const std::int64_t offset = entry["offset"].get<std::int64_t>();
    // records must tile the payload contiguously in manifest order
    if (offset != expected_offset) {
      fail(ErrorCode::CorruptFile, "archive offsets overlap or leave gaps");
    }
    expected_offset += record_numel(record.shape);
    archive.tensors.push_back(std::move(record));
  }

  const std::size_t payload_start = header_start + header_len;
  const std::size_t payload_bytes = bytes.size() - payload_start;
  if (payload_bytes !=
      static_cast<std::size_t>(expected_offset) * sizeof(float)) {
    fail(ErrorCode::CorruptFile,
         "archive payload size disagrees with its manifest");
  }
  const char* cursor = bytes.data() + payload_start;
  for (auto& record : archive.tensors) {
    const std::size_t numel =
        static_cast<std::size_t>(record_numel(record.shape));
    record.values.resize(numel);
    std::memcpy(record.values.data(), cursor, numel * sizeof(float));
    cursor += numel * sizeof(float);
  }
  return archive;
}

ParamArchive archive_from_params(const std::vector<NamedParam>& params,
                                 nlohmann::json meta) {
  ParamArchive archive;
  archive.meta = std::move(meta);
  archive.tensors.reserve(params.size());
  for (const auto& param : params) {
    TensorRecord record;
    record.name = param.name;
    record.shape = param.tensor.shape();
    record.values.reserve(param.tensor.values().size());
    for (double v : param.tensor.values()) {
      record.values.push_back(static_cast<float>(v));
    }
    archive.tensors.push_back(std::move(record));
  }
  return archive;
}

void load_params_from_archive(const ParamArchive& archive,
                              const std::vector<NamedParam>& params) {
  for (const auto& param : params) {
    const TensorRecord* found = nullptr;
    for (const auto& record : archive.tensors) {
      if (record.name == param.name) {
        found = &record;
        break;
      }
    }
    if (!found) {
      fail(ErrorCode::CorruptFile,
           "checkpoint has no tensor named '" + param.name + "'");
    }
    if (found->shape != param.tensor.shape()) {
      fail(ErrorCode::CorruptFile,
           "checkpoint tensor '" + param.name + "' has the wrong shape");
    }
    Tensor tensor = param.tensor;
    auto& values = tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = static_cast<double>(found->values[i]);
    }
  }
}

}  // namespace refrm3d
