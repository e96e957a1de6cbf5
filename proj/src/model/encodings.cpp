#include "dsam/model/encodings.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "dsam/errors.hpp"

namespace dsam::model {

std::vector<EncodingRow> collect_encodings(const AcousticModel& model,
                                           std::span<const features::Utterance* const> utterances, Stream stream,
                                           const frontend::FrontendConfig& frontend) {
  std::vector<EncodingRow> rows;
  for (const features::Utterance* u : utterances) {
    ad::Graph g(&model.params());
    const ad::Tensor& x = model.encode(g, u->sequence, stream).value();
    const std::size_t len = x.cols();
    for (std::size_t i = 0; i < u->sequence.length(); ++i) {
      if (u->sequence.tokens[i] == frontend::kBoundaryToken) continue;
      EncodingRow row;
      row.utterance = u->transcription.id;
      row.position = i;
      row.phoneme = frontend.symbol_of(u->sequence.tokens[i]);
      row.prosody = frontend.mark_of(u->sequence.labels[i]);
      row.language = frontend.languages.at(u->sequence.language).name;
      for (std::size_t r = 0; r < x.rows(); ++r) row.vector.push_back(x[r * len + i]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_encodings(const std::filesystem::path& path, const std::vector<EncodingRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t dim = rows.empty() ? 0 : rows.front().vector.size();
  out << "utterance\tposition\tphoneme\tprosody\tlanguage";
  for (std::size_t d = 0; d < dim; ++d) out << "\tv" << d;
  out << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.utterance << '\t' << r.position << '\t' << r.phoneme << '\t' << r.prosody << '\t' << r.language;
    for (double v : r.vector) out << '\t' << v;
    out << '\n';
  }
}

std::vector<EncodingRow> read_encodings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EncodingRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    EncodingRow r;
    std::string pos;
    if (!std::getline(ss, r.utterance, '\t') || !std::getline(ss, pos, '\t') || !std::getline(ss, r.phoneme, '\t') ||
        !std::getline(ss, r.prosody, '\t') || !std::getline(ss, r.language, '\t')) {
      throw FormatError(path.string(), lineno, "expected at least 5 columns");
    }
    r.position = std::stoul(pos);
    std::string cell;
    while (std::getline(ss, cell, '\t')) r.vector.push_back(std::stod(cell));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dsam::model
