#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsam/features.hpp"
#include "dsam/model/model.hpp"

namespace dsam::model {

// Encoder output column of one non-boundary phoneme occurrence.
struct EncodingRow {
  std::string utterance;
  std::size_t position = 0;
  std::string phoneme;
  std::string prosody;
  std::string language;
  std::vector<double> vector;
};

std::vector<EncodingRow> collect_encodings(const AcousticModel& model,
                                           std::span<const features::Utterance* const> utterances, Stream stream,
                                           const frontend::FrontendConfig& frontend);

// Tab-separated with a header row: utterance, position, phoneme, prosody,
// language, v0 .. v{D-1}.
void write_encodings(const std::filesystem::path& path, const std::vector<EncodingRow>& rows);
std::vector<EncodingRow> read_encodings(const std::filesystem::path& path);

}  // namespace dsam::model
