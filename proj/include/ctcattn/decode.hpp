#ifndef CTCATTN_DECODE_HPP_
#define CTCATTN_DECODE_HPP_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctcattn/ctc.hpp"

namespace ctcattn {

// Label inventory. Symbols may span several characters ("ll", "'re").
// The blank is stored as "<blank>"; the space unit as " ".
class Charset {
 public:
  static constexpr std::string_view kBlank = "<blank>";
  static constexpr std::string_view kSpace = " ";

  // Throws std::invalid_argument unless symbols are unique, non-empty and
  // contain exactly one blank.
  explicit Charset(std::vector<std::string> symbols);

  // blank, space, a-z.
  static Charset english28();
  // english28 plus word-initial capitals, doubled letters and apostrophe
  // units; 83 symbols. Illustrative, not a canonical inventory.
  static Charset english83();
  // blank plus the first `letters` lowercase letters and space.
  static Charset toy(std::size_t letters);

  // One symbol per line. "<blank>" and "<space>" lines name the blank and
  // space units; blank lines and lines starting with "#" are skipped.
  static Charset parse(std::istream& is);
  static Charset load(const std::filesystem::path& path);
  void write(std::ostream& os) const;

  std::size_t size() const { return symbols_.size(); }
  std::size_t blank_id() const { return blank_; }
  std::optional<std::size_t> space_id() const { return space_; }
  const std::string& symbol(std::size_t id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  std::optional<std::size_t> find(std::string_view symbol) const;

  // Greedy longest match over the symbol strings. Throws
  // std::invalid_argument naming the first unencodable position.
  LabelSequence encode(std::string_view text) const;
  // Concatenation of symbol strings; blanks are rejected.
  std::string decode(const LabelSequence& labels) const;

  bool operator==(const Charset& other) const {
    return symbols_ == other.symbols_;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t blank_ = 0;
  std::optional<std::size_t> space_;
  std::size_t longest_ = 1;
};

struct Transcript {
  std::vector<std::string> words;

  // Splits on runs of spaces; never yields empty words.
  static Transcript from_text(std::string_view text);
  std::string text() const;
  bool operator==(const Transcript&) const = default;
};

// Per-frame argmax, lowest index on ties.
std::vector<std::size_t> best_path(const LogPosteriorLattice& lattice);

// argmax -> collapse -> charset decode -> split on spaces.
Transcript greedy_decode(const LogPosteriorLattice& lattice,
                         const Charset& charset);

struct EditStats {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  bool operator==(const EditStats&) const = default;
};

// Unit-cost Levenshtein alignment with operation counts.
template <typename T>
EditStats edit_distance(std::span<const T> ref, std::span<const T> hyp);

extern template EditStats edit_distance<std::string>(
    std::span<const std::string>, std::span<const std::string>);
extern template EditStats edit_distance<char>(std::span<const char>,
                                              std::span<const char>);

// Accumulated errors over reference tokens.
struct ErrorCounts {
  std::size_t errors = 0;
  std::size_t ref_tokens = 0;

  ErrorCounts& operator+=(const ErrorCounts& o) {
    errors += o.errors;
    ref_tokens += o.ref_tokens;
    return *this;
  }
  // Throws std::domain_error when there are no reference tokens.
  double rate() const;
};

ErrorCounts word_errors(const Transcript& ref, const Transcript& hyp);
// Character level over Transcript::text().
ErrorCounts char_errors(const Transcript& ref, const Transcript& hyp);

}  // namespace ctcattn

#endif  // CTCATTN_DECODE_HPP_
