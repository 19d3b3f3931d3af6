// Dataset files: one JSON object per line,
//   {"id": 3, "view": 1, "camera": 4, "split": "train", "raw": [0.12, ...]}
// Doubles are written in shortest round-trip form, so load(save(x)) == x.
// Paths ending in ".gz" are gzip-compressed; reading accepts either.
#pragma once

#include <zlib.h>

#include <cstdio>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>
#include "vareid/error.hpp"
#include "vareid/synth.hpp"

namespace vareid {

namespace detail {

struct GzCloser {
  void operator()(gzFile f) const {
    if (f != nullptr) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

inline bool ends_with_gz(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

}  // namespace detail

inline nlohmann::json sample_to_json(const Sample& s) {
  return nlohmann::json{{"id", s.identity},
                        {"view", s.viewpoint},
                        {"camera", s.camera},
                        {"split", std::string(to_string(s.split))},
                        {"raw", s.raw}};
}

inline Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  s.identity = j.at("id").get<int>();
  s.viewpoint = j.at("view").get<int>();
  s.camera = j.at("camera").get<int>();
  const auto split = parse_split(j.at("split").get<std::string>());
  if (!split) throw std::invalid_argument("unknown split '" + j.at("split").get<std::string>() + "'");
  s.split = *split;
  s.raw = j.at("raw").get<Vec>();
  if (s.viewpoint < 0) throw std::invalid_argument("negative viewpoint");
  return s;
}

inline void save_dataset(const Dataset& samples, const std::string& path) {
  const bool gz = detail::ends_with_gz(path);
  std::string text;
  for (const Sample& s : samples) {
    text += sample_to_json(s).dump();
    text += '\n';
  }
  if (gz) {
    detail::GzHandle f(gzopen(path.c_str(), "wb"));
    if (!f) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    if (!text.empty() && gzwrite(f.get(), text.data(), static_cast<unsigned>(text.size())) == 0) {
      throw Error(ErrorKind::Io, "write failed for " + path);
    }
    return;
  }
  std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  if (std::fwrite(text.data(), 1, text.size(), f.get()) != text.size()) {
    throw Error(ErrorKind::Io, "write failed for " + path);
  }
}

inline Dataset parse_dataset(const std::string& text, const std::string& origin = "<memory>") {
  Dataset out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::ParseError, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline Dataset load_dataset(const std::string& path) {
  detail::GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string text;
  char buf[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), buf, sizeof(buf));
    if (n < 0) throw Error(ErrorKind::Io, "read failed for " + path);
    if (n == 0) break;
    text.append(buf, static_cast<std::size_t>(n));
  }
  return parse_dataset(text, path);
}

}  // namespace vareid
