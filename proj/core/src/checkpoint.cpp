#include "psim/checkpoint.hpp"

#include "json.hpp"
#include "psim/error.hpp"
#include "psim/io.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "autodiff-core";

nlohmann::json parse_checkpoint(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(kModule, std::string("malformed checkpoint: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw DataError(kModule, "checkpoint lacks format tag " + std::string(kCheckpointFormat));
  }
  return doc;
}

}  // namespace

std::string checkpoint_to_json(const ParameterSet& params, std::string_view meta_json) {
  nlohmann::ordered_json doc;
  doc["format"] = kCheckpointFormat;
  doc["meta"] = meta_json.empty() ? nlohmann::ordered_json::object()
                                  : nlohmann::ordered_json::parse(meta_json);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  for (const Parameter* p : params.all()) {
    nlohmann::ordered_json entry;
    entry["shape"] = {p->value.rows(), p->value.cols()};
    auto values = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) values.push_back(p->value(r, c));
    }
    entry["values"] = std::move(values);
    tensors[p->name] = std::move(entry);
  }
  doc["parameters"] = std::move(tensors);
  return doc.dump();
}

std::string load_checkpoint_json(ParameterSet& params, std::string_view json_text) {
  const auto doc = parse_checkpoint(json_text);
  try {
    const auto& tensors = doc.at("parameters");
    for (Parameter* p : params.all()) {
      if (!tensors.contains(p->name)) {
        throw DataError(kModule, "checkpoint is missing parameter '" + p->name + "'");
      }
      const auto& entry = tensors.at(p->name);
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
        throw DataError(kModule, "checkpoint shape mismatch for '" + p->name + "'");
      }
      const auto values = entry.at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != p->value.size()) {
        throw DataError(kModule, "checkpoint value count mismatch for '" + p->name + "'");
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        for (Eigen::Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = values[k++];
      }
      p->zero_grad();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(kModule, std::string("malformed checkpoint: ") + e.what());
  }
  return doc.value("meta", nlohmann::json::object()).dump();
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path,
                     std::string_view meta_json) {
  write_text_file_atomic(path, checkpoint_to_json(params, meta_json) + "\n");
}

std::string load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
  return load_checkpoint_json(params, read_text_file(path));
}

std::string read_checkpoint_meta(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path)).value("meta", nlohmann::json::object()).dump();
}

}  // namespace psim
