#pragma once

// Shared fixtures for the unit tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "abbrx/corpus.hpp"
#include "abbrx/embeddings.hpp"

namespace abbrx::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("abbrx-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// An embedding model with exactly these word vectors and no trained n-grams.
inline EmbeddingModel make_embeddings(const TempDir& dir,
                                      const std::vector<std::pair<std::string, std::vector<float>>>& rows,
                                      int dim, std::uint32_t buckets = 1000) {
  static int serial = 0;
  const auto path = dir / ("hand-" + std::to_string(serial++) + ".vec");
  std::string text = std::to_string(rows.size()) + " " + std::to_string(dim) + "\n";
  for (const auto& [w, v] : rows) {
    text += w;
    for (float x : v) text += " " + std::to_string(x);
    text += "\n";
  }
  write_text(path, text);
  auto sub = path;
  sub += ".subwords";
  write_text(sub, "abbrx-subwords 1 0\n{\"dim\":" + std::to_string(dim) +
                      ",\"min_ngram\":3,\"max_ngram\":6,\"bucket_count\":" + std::to_string(buckets) +
                      ",\"window\":5,\"negative_samples\":5,\"epochs\":5,\"learning_rate\":0.05,"
                      "\"min_count\":1,\"seed\":1}\n");
  return EmbeddingModel::load(path);
}

inline Corpus make_corpus(const std::vector<std::string>& texts) {
  Corpus c;
  for (std::size_t i = 0; i < texts.size(); ++i)
    c.add(Document::from_text("d" + std::to_string(i), texts[i]));
  return c;
}

}  // namespace abbrx::testing
