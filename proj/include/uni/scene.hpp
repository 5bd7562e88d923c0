#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uni/image.hpp"
#include "uni/rng.hpp"

namespace uni {

// Procedural scene corpus: ≤3 objects from {circle, square, triangle} in 8
// named colors on a 3x3 cell layout. The renderer and the detector share the
// same geometry tables, so detection on clean renders is exact.

enum class Shape3 { Circle = 0, Square = 1, Triangle = 2 };
enum class Lang { EN = 0, XX = 1 };
enum class Split { Train = 0, Eval = 1 };

inline const char* shape_name(Shape3 s) {
  switch (s) {
    case Shape3::Circle: return "circle";
    case Shape3::Square: return "square";
    default: return "triangle";
  }
}
inline const char* shape_name_plural(Shape3 s) {
  switch (s) {
    case Shape3::Circle: return "circles";
    case Shape3::Square: return "squares";
    default: return "triangles";
  }
}

constexpr int kNumColors = 8;
extern const std::array<std::array<float, 3>, kNumColors> kPalette;
extern const std::array<const char*, kNumColors> kColorNames;
extern const std::array<const char*, 9> kCellNames;  // "top left", ..., word pairs joined by space

struct SceneObject {
  Shape3 shape = Shape3::Circle;
  int color = 0;     // palette index, never equal to background
  int cell = 4;      // 0..8 in a 3x3 layout, row-major
  int size = 1;      // 0 small, 1 large
  bool operator==(const SceneObject&) const = default;
};

struct SceneSpec {
  int hpx = 32, wpx = 32;
  int bg = 7;
  std::vector<SceneObject> objects;
  bool operator==(const SceneSpec&) const = default;

  uint64_t hash() const;
  bool valid() const;
};

Image render(const SceneSpec& spec);

struct DetectedObject {
  int cell = -1;
  Shape3 shape = Shape3::Circle;
  int color = 0;
};
struct Detection {
  int bg = 0;
  std::vector<DetectedObject> objects;  // ordered by cell

  const DetectedObject* find_shape(Shape3 s) const;
  int count_shape(Shape3 s) const;
};
Detection detect(const Image& img);

// Pixel mask (h*w bytes, 1 = inside) covering the given cells.
std::vector<uint8_t> cell_pixel_mask(int hpx, int wpx, const std::vector<int>& cells);

// --- language -------------------------------------------------------------

// Fixed bijective word substitution standing in for a second language.
std::string xx_word(const std::string& en);
std::string en_word_from_xx(const std::string& xx);
std::vector<std::string> lexicon_en();  // closed caption-grammar lexicon

std::vector<std::string> to_lang(const std::vector<std::string>& en_words, Lang lang);

// Scene description from the closed grammar; phrasing varies with rng so the
// training distribution covers partial prompts ("a circle", "two red circles",
// "a circle at top left and a square at center", ...).
std::vector<std::string> caption_words(const SceneSpec& spec, Lang lang, Rng& rng);

struct QaPair {
  std::vector<std::string> question;
  std::vector<std::string> answer;  // single word in this grammar
};
QaPair make_qa(const SceneSpec& spec, Lang lang, Rng& rng);

// --- editing --------------------------------------------------------------

enum class EditKind { Recolor = 0, Add = 1, Remove = 2, Move = 3, Keep = 4 };

struct EditPair {
  SceneSpec source, target;
  EditKind kind = EditKind::Keep;
  std::vector<std::string> instruction;  // EN words; translate via to_lang
  std::vector<int> edited_cells;         // empty for Keep
};

// --- sampling / splits ----------------------------------------------------

// Split membership is a pure function of the spec so train and eval streams
// are disjoint by construction.
Split split_of(const SceneSpec& spec);

SceneSpec sample_scene(Rng& rng, int hpx, int wpx, Split split);
EditPair make_edit_pair(Rng& rng, int hpx, int wpx, Split split, Lang lang);

}  // namespace uni
