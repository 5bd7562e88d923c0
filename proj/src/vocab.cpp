#include "uni/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "uni/scene.hpp"

namespace uni {

UnifiedVocab::UnifiedVocab(std::vector<int> heights, std::vector<int> widths, int codebook_size)
    : heights_(std::move(heights)), widths_(std::move(widths)), k_codes_(codebook_size) {
  std::sort(heights_.begin(), heights_.end());
  std::sort(widths_.begin(), widths_.end());
  for (const auto& w : lexicon_en()) words_.push_back(w);
  for (const auto& w : lexicon_en()) words_.push_back(xx_word(w));
  for (size_t i = 0; i < words_.size(); ++i) {
    if (word_index_.count(words_[i])) throw std::logic_error("lexicon collision: " + words_[i]);
    word_index_[words_[i]] = static_cast<int>(i);
  }
  specials_ = {"<bos>", "<eos>", "<eol>", "<mask>", "<boi>", "<eoi>"};
  for (int h : heights_) specials_.push_back("<h=" + std::to_string(h) + ">");
  for (int w : widths_) specials_.push_back("<w=" + std::to_string(w) + ">");
  for (size_t i = 0; i < specials_.size(); ++i)
    special_index_[specials_[i]] = v_text() + static_cast<int>(i);
}

bool UnifiedVocab::supports_grid(int h, int w) const {
  return std::count(heights_.begin(), heights_.end(), h) &&
         std::count(widths_.begin(), widths_.end(), w);
}

UnifiedVocab::Category UnifiedVocab::category(int id) const {
  if (id < 0 || id >= total()) throw std::out_of_range("vocab: id out of range: " + std::to_string(id));
  if (id < v_text()) return Category::Text;
  if (id < v_text() + n_special()) return Category::Special;
  return Category::ImageCode;
}

int UnifiedVocab::code_to_id(int code) const {
  if (code < 0 || code >= k_codes_) throw std::out_of_range("vocab: code out of range");
  return code_base() + code;
}

int UnifiedVocab::id_to_code(int id) const {
  if (category(id) != Category::ImageCode) throw std::invalid_argument("vocab: id is not an image code");
  return id - code_base();
}

int UnifiedVocab::word_id(const std::string& w) const {
  auto it = word_index_.find(w);
  if (it == word_index_.end()) throw std::out_of_range("vocab: unknown word: " + w);
  return it->second;
}

int UnifiedVocab::special(const std::string& name) const {
  auto it = special_index_.find(name);
  if (it == special_index_.end()) throw std::out_of_range("vocab: unknown special: " + name);
  return it->second;
}

const std::string& UnifiedVocab::name(int id) const {
  if (category(id) == Category::Text) return words_[static_cast<size_t>(id)];
  if (category(id) == Category::Special) return specials_[static_cast<size_t>(id - v_text())];
  static thread_local std::string code_name;
  code_name = "<code:" + std::to_string(id_to_code(id)) + ">";
  return code_name;
}

std::vector<int> UnifiedVocab::encode_words(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(word_id(w));
  return ids;
}

std::vector<std::string> UnifiedVocab::decode_words(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int id : ids) words.push_back(name(id));
  return words;
}

std::vector<std::string> UnifiedVocab::table() const {
  std::vector<std::string> t;
  t.reserve(static_cast<size_t>(total()));
  for (int id = 0; id < total(); ++id) t.push_back(name(id));
  return t;
}

}  // namespace uni
