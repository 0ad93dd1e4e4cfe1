#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "iclner/corpus.hpp"
#include "iclner/error.hpp"
#include "iclner/embedstore.hpp"
#include "iclner/random.hpp"
#include "iclner/text.hpp"

namespace testing {

// Kind of the iclner::Error thrown by `f`; fails the test when nothing is thrown.
inline iclner::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const iclner::Error& e) {
    return e.kind();
  }
  FAIL("expected an iclner::Error");
  return iclner::ErrorKind::io;
}

inline iclner::Sentence sentence(const std::string& text, iclner::SentenceId id = 0) {
  iclner::Sentence s;
  s.id = id;
  s.tokens = iclner::split_whitespace(text);
  return s;
}

inline iclner::EntitySpan span(const iclner::Sentence& s, std::size_t start, std::size_t end, std::string type) {
  return iclner::make_span(s, start, end, std::move(type));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("iclner-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random tokens that never contain markup characters.
inline std::string random_word(iclner::Rng& rng) {
  static const std::vector<std::string> words = {"the", "Paris", "a", "of", "Bank", "said", "John", "New", "York",
                                                 "on", "1-0", "(", ")", ",", ".", "U.S.", "e-mail", "$", "17", "won"};
  return words[rng.below(words.size())];
}

// Non-overlapping spans placed left to right.
inline std::vector<iclner::EntitySpan> random_flat_spans(iclner::Rng& rng, const iclner::Sentence& s,
                                                         const std::string& type) {
  std::vector<iclner::EntitySpan> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (rng.uniform01() < 0.3) {
      const std::size_t len = 1 + rng.below(std::min<std::size_t>(3, s.size() - i));
      out.push_back(iclner::make_span(s, i, i + len - 1, type));
      i += len + rng.below(2);
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace testing
