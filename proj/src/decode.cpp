#include "ctcattn/decode.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ctcattn {

Charset::Charset(std::vector<std::string> symbols)
    : symbols_(std::move(symbols)) {
  bool have_blank = false;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const std::string& s = symbols_[i];
    if (s.empty()) throw std::invalid_argument("charset: empty symbol");
    if (!index_.emplace(s, i).second) {
      throw std::invalid_argument("charset: duplicate symbol '" + s + "'");
    }
    if (s == kBlank) {
      have_blank = true;
      blank_ = i;
    } else {
      if (s == kSpace) space_ = i;
      longest_ = std::max(longest_, s.size());
    }
  }
  if (!have_blank) throw std::invalid_argument("charset: no blank symbol");
  if (symbols_.size() < 2) throw std::invalid_argument("charset: no labels");
}

Charset Charset::english28() {
  std::vector<std::string> s = {std::string(kBlank), std::string(kSpace)};
  for (char c = 'a'; c <= 'z'; ++c) s.emplace_back(1, c);
  return Charset(std::move(s));
}

Charset Charset::english83() {
  std::vector<std::string> s = english28().symbols();
  for (char c = 'A'; c <= 'Z'; ++c) s.emplace_back(1, c);
  for (const char* d : {"ll", "ss", "ee", "oo", "tt", "ff", "rr", "nn", "pp",
                        "cc", "mm", "dd", "gg", "bb", "zz", "aa", "ii", "uu",
                        "kk", "vv"}) {
    s.emplace_back(d);
  }
  for (const char* a : {"'s", "'t", "'d", "'m", "'r", "'ll", "'re", "'ve",
                        "'de"}) {
    s.emplace_back(a);
  }
  return Charset(std::move(s));
}

Charset Charset::toy(std::size_t letters) {
  if (letters == 0 || letters > 26) {
    throw std::invalid_argument("toy charset: 1..26 letters");
  }
  std::vector<std::string> s = {std::string(kBlank)};
  for (std::size_t i = 0; i < letters; ++i) {
    s.emplace_back(1, static_cast<char>('a' + i));
  }
  s.emplace_back(kSpace);
  return Charset(std::move(s));
}

Charset Charset::parse(std::istream& is) {
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line == "<space>") {
      symbols.emplace_back(kSpace);
    } else {
      symbols.push_back(line);
    }
  }
  return Charset(std::move(symbols));
}

Charset Charset::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return parse(is);
}

void Charset::write(std::ostream& os) const {
  for (const std::string& s : symbols_) os << (s == kSpace ? "<space>" : s) << '\n';
}

std::optional<std::size_t> Charset::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelSequence Charset::encode(std::string_view text) const {
  LabelSequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_, text.size() - pos); len > 0;
         --len) {
      auto it = index_.find(std::string(text.substr(pos, len)));
      if (it == index_.end() || it->second == blank_) continue;
      out.ids.push_back(it->second);
      pos += len;
      matched = true;
      break;
    }
    if (!matched) {
      throw std::invalid_argument("charset: cannot encode '" +
                                  std::string(text.substr(pos, 1)) +
                                  "' at position " + std::to_string(pos));
    }
  }
  return out;
}

std::string Charset::decode(const LabelSequence& labels) const {
  std::string out;
  for (std::size_t id : labels.ids) {
    if (id == blank_) throw std::invalid_argument("charset: decode of blank");
    out += symbols_.at(id);
  }
  return out;
}

Transcript Transcript::from_text(std::string_view text) {
  Transcript t;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = text.find_first_not_of(' ', pos);
    if (start == std::string_view::npos) break;
    const std::size_t end = std::min(text.find(' ', start), text.size());
    t.words.emplace_back(text.substr(start, end - start));
    pos = end;
  }
  return t;
}

std::string Transcript::text() const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<std::size_t> best_path(const LogPosteriorLattice& lattice) {
  std::vector<std::size_t> path(lattice.frames());
  for (std::size_t t = 0; t < lattice.frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < lattice.labels(); ++k) {
      if (lattice.logp.at(t, k) > lattice.logp.at(t, best)) best = k;
    }
    path[t] = best;
  }
  return path;
}

Transcript greedy_decode(const LogPosteriorLattice& lattice,
                         const Charset& charset) {
  if (lattice.labels() != charset.size()) {
    throw DimensionError("greedy_decode: lattice has " +
                         std::to_string(lattice.labels()) +
                         " labels, charset " + std::to_string(charset.size()));
  }
  const auto path = best_path(lattice);
  return Transcript::from_text(
      charset.decode(collapse(path, charset.blank_id())));
}

template <typename T>
EditStats edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t r = ref.size(), h = hyp.size();
  std::vector<EditStats> prev(h + 1), cur(h + 1);
  for (std::size_t j = 0; j <= h; ++j) prev[j] = {j, 0, j, 0};
  for (std::size_t i = 1; i <= r; ++i) {
    cur[0] = {i, 0, 0, i};
    for (std::size_t j = 1; j <= h; ++j) {
      // Ties prefer match/substitution, then deletion, then insertion.
      EditStats best = prev[j - 1];
      if (!(ref[i - 1] == hyp[j - 1])) {
        ++best.distance;
        ++best.substitutions;
      }
      EditStats del = prev[j];
      ++del.distance;
      ++del.deletions;
      if (del.distance < best.distance) best = del;
      EditStats ins = cur[j - 1];
      ++ins.distance;
      ++ins.insertions;
      if (ins.distance < best.distance) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[h];
}

template EditStats edit_distance<std::string>(std::span<const std::string>,
                                              std::span<const std::string>);
template EditStats edit_distance<char>(std::span<const char>,
                                       std::span<const char>);

double ErrorCounts::rate() const {
  if (ref_tokens == 0) {
    throw std::domain_error("error rate undefined for an empty reference");
  }
  return static_cast<double>(errors) / static_cast<double>(ref_tokens);
}

ErrorCounts word_errors(const Transcript& ref, const Transcript& hyp) {
  const auto e = edit_distance<std::string>(ref.words, hyp.words);
  return {e.distance, ref.words.size()};
}

ErrorCounts char_errors(const Transcript& ref, const Transcript& hyp) {
  const std::string r = ref.text(), h = hyp.text();
  const auto e = edit_distance<char>(r, h);
  return {e.distance, r.size()};
}

}  // namespace ctcattn
