#pragma once

#include <map>
#include <string>
#include <vector>

namespace uni {

// Unified id space, contiguous ranges:
//   [0, v_text)                      caption-grammar words (EN + pseudo-language)
//   [v_text, v_text + n_special)     <bos> <eos> <eol> <mask> <boi> <eoi> <h=k> <w=k>
//   [v_text + n_special, total)      image code ids (codebook indices)
// The text head scores the first two ranges; generation/edit heads score codes.
class UnifiedVocab {
 public:
  enum class Category { Text, Special, ImageCode };

  UnifiedVocab() = default;
  UnifiedVocab(std::vector<int> heights, std::vector<int> widths, int codebook_size);

  int v_text() const { return static_cast<int>(words_.size()); }
  int n_special() const { return static_cast<int>(specials_.size()); }
  int k_codes() const { return k_codes_; }
  int total() const { return v_text() + n_special() + k_codes_; }
  int text_head_width() const { return v_text() + n_special(); }

  int bos() const { return special("<bos>"); }
  int eos() const { return special("<eos>"); }
  int eol() const { return special("<eol>"); }
  int mask_token() const { return special("<mask>"); }
  int boi() const { return special("<boi>"); }
  int eoi() const { return special("<eoi>"); }
  int h_token(int h) const { return special("<h=" + std::to_string(h) + ">"); }
  int w_token(int w) const { return special("<w=" + std::to_string(w) + ">"); }

  const std::vector<int>& heights() const { return heights_; }
  const std::vector<int>& widths() const { return widths_; }
  bool supports_grid(int h, int w) const;

  Category category(int id) const;
  int code_base() const { return v_text() + n_special(); }
  int code_to_id(int code) const;          // codebook index -> unified id
  int id_to_code(int id) const;            // unified id -> codebook index

  int word_id(const std::string& w) const;  // throws on unknown word
  bool has_word(const std::string& w) const { return word_index_.count(w) != 0; }
  const std::string& name(int id) const;    // word or special name

  std::vector<int> encode_words(const std::vector<std::string>& words) const;
  std::vector<std::string> decode_words(const std::vector<int>& ids) const;

  // Flat id -> name table for the checkpoint header.
  std::vector<std::string> table() const;

 private:
  int special(const std::string& name) const;

  std::vector<std::string> words_;
  std::vector<std::string> specials_;
  std::map<std::string, int> word_index_;     // word -> id
  std::map<std::string, int> special_index_;  // name -> id (global)
  std::vector<int> heights_, widths_;
  int k_codes_ = 0;
};

}  // namespace uni
