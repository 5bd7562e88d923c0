#include "uni/scene.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace uni {

const std::array<std::array<float, 3>, kNumColors> kPalette = {{
    {1.00f, 0.10f, 0.10f},  // red
    {0.10f, 0.75f, 0.10f},  // green
    {0.15f, 0.25f, 1.00f},  // blue
    {1.00f, 0.90f, 0.10f},  // yellow
    {0.60f, 0.10f, 0.80f},  // purple
    {1.00f, 0.55f, 0.10f},  // orange
    {0.95f, 0.95f, 0.95f},  // white
    {0.05f, 0.05f, 0.05f},  // black
}};

const std::array<const char*, kNumColors> kColorNames = {
    "red", "green", "blue", "yellow", "purple", "orange", "white", "black"};

const std::array<const char*, 9> kCellNames = {
    "top left", "top", "top right", "left", "center", "right",
    "bottom left", "bottom", "bottom right"};

namespace {

struct CellGeom {
  double cy, cx, half;
};

CellGeom cell_geom(const SceneSpec& spec, const SceneObject& o) {
  int r = o.cell / 3, c = o.cell % 3;
  double cy = (r + 0.5) * spec.hpx / 3.0;
  double cx = (c + 0.5) * spec.wpx / 3.0;
  double cellmin = std::min(spec.hpx, spec.wpx) / 3.0;
  double half = (o.size == 0 ? 0.30 : 0.42) * cellmin;
  return {cy, cx, half};
}

bool inside(Shape3 s, double dy, double dx, double half) {
  switch (s) {
    case Shape3::Circle:
      return dy * dy + dx * dx <= half * half;
    case Shape3::Square:
      return std::abs(dy) <= half * 0.88 && std::abs(dx) <= half * 0.88;
    default: {  // upward triangle, apex at the top of the cell box
      if (dy < -half || dy > half) return false;
      double w = (dy + half) / 2.0;
      return std::abs(dx) <= w;
    }
  }
}

int snap_color(const float* px) {
  int best = 0;
  float bd = 1e9f;
  for (int k = 0; k < kNumColors; ++k) {
    float d = 0;
    for (int ch = 0; ch < 3; ++ch) {
      float e = px[ch] - kPalette[k][ch];
      d += e * e;
    }
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

uint64_t SceneSpec::hash() const {
  uint64_t h = fnv1a(&hpx, sizeof(hpx));
  h = fnv1a(&wpx, sizeof(wpx), h);
  h = fnv1a(&bg, sizeof(bg), h);
  for (const auto& o : objects) {
    int f[4] = {static_cast<int>(o.shape), o.color, o.cell, o.size};
    h = fnv1a(f, sizeof(f), h);
  }
  return h;
}

bool SceneSpec::valid() const {
  if (objects.size() > 3) return false;
  if (bg < 0 || bg >= kNumColors) return false;
  std::vector<int> cells;
  for (const auto& o : objects) {
    if (o.color < 0 || o.color >= kNumColors || o.color == bg) return false;
    if (o.cell < 0 || o.cell > 8) return false;
    if (std::count(cells.begin(), cells.end(), o.cell)) return false;
    cells.push_back(o.cell);
  }
  return true;
}

Image render(const SceneSpec& spec) {
  if (!spec.valid()) throw std::invalid_argument("render: invalid scene spec");
  Image img(spec.hpx, spec.wpx);
  const auto& bg = kPalette[spec.bg];
  for (int r = 0; r < spec.hpx; ++r)
    for (int c = 0; c < spec.wpx; ++c) img.set(r, c, bg[0], bg[1], bg[2]);
  for (const auto& o : spec.objects) {
    CellGeom g = cell_geom(spec, o);
    const auto& col = kPalette[o.color];
    for (int r = 0; r < spec.hpx; ++r) {
      double dy = r + 0.5 - g.cy;
      if (std::abs(dy) > g.half + 1) continue;
      for (int c = 0; c < spec.wpx; ++c) {
        double dx = c + 0.5 - g.cx;
        if (inside(o.shape, dy, dx, g.half)) img.set(r, c, col[0], col[1], col[2]);
      }
    }
  }
  return img;
}

const DetectedObject* Detection::find_shape(Shape3 s) const {
  for (const auto& o : objects)
    if (o.shape == s) return &o;
  return nullptr;
}
int Detection::count_shape(Shape3 s) const {
  int n = 0;
  for (const auto& o : objects) n += o.shape == s;
  return n;
}

Detection detect(const Image& img) {
  Detection det;
  std::array<int, kNumColors> global{};
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) ++global[snap_color(img.at(r, c))];
  det.bg = static_cast<int>(std::max_element(global.begin(), global.end()) - global.begin());

  for (int cell = 0; cell < 9; ++cell) {
    int cr = cell / 3, cc = cell % 3;
    int y0 = cr * img.h / 3, y1 = (cr + 1) * img.h / 3;
    int x0 = cc * img.w / 3, x1 = (cc + 1) * img.w / 3;
    std::array<int, kNumColors> counts{};
    int total = 0;
    for (int r = y0; r < y1; ++r)
      for (int c = x0; c < x1; ++c) {
        int k = snap_color(img.at(r, c));
        if (k != det.bg) {
          ++counts[k];
          ++total;
        }
      }
    double cellmin = std::min(img.h, img.w) / 3.0;
    if (total < std::max(6.0, cellmin * cellmin / 12.0)) continue;
    int color = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

    // Classify by matching the majority-color mask against every rendered
    // template (shape x size) with the renderer's own geometry; exact on
    // clean renders, best-IoU on noisy ones.
    SceneSpec probe;
    probe.hpx = img.h;
    probe.wpx = img.w;
    Shape3 shape = Shape3::Circle;
    double best_iou = -1.0;
    for (int si = 0; si < 3; ++si)
      for (int size = 0; size < 2; ++size) {
        SceneObject o{static_cast<Shape3>(si), color, cell, size};
        CellGeom g = cell_geom(probe, o);
        int inter = 0, uni = 0;
        for (int r = y0; r < y1; ++r)
          for (int c = x0; c < x1; ++c) {
            bool obs = snap_color(img.at(r, c)) == color;
            bool tmpl = inside(o.shape, r + 0.5 - g.cy, c + 0.5 - g.cx, g.half);
            inter += obs && tmpl;
            uni += obs || tmpl;
          }
        double iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
        if (iou > best_iou) {
          best_iou = iou;
          shape = o.shape;
        }
      }
    det.objects.push_back({cell, shape, color});
  }
  return det;
}

std::vector<uint8_t> cell_pixel_mask(int hpx, int wpx, const std::vector<int>& cells) {
  std::vector<uint8_t> mask(static_cast<size_t>(hpx) * wpx, 0);
  for (int cell : cells) {
    int cr = cell / 3, cc = cell % 3;
    int y0 = cr * hpx / 3, y1 = (cr + 1) * hpx / 3;
    int x0 = cc * wpx / 3, x1 = (cc + 1) * wpx / 3;
    for (int r = y0; r < y1; ++r)
      for (int c = x0; c < x1; ++c) mask[static_cast<size_t>(r) * wpx + c] = 1;
  }
  return mask;
}

// --- language -------------------------------------------------------------

std::string xx_word(const std::string& en) {
  std::string out(en.rbegin(), en.rend());
  return out + "u";
}

std::string en_word_from_xx(const std::string& xx) {
  if (xx.empty() || xx.back() != 'u') throw std::invalid_argument("not a pseudo-language word: " + xx);
  std::string core = xx.substr(0, xx.size() - 1);
  return std::string(core.rbegin(), core.rend());
}

std::vector<std::string> lexicon_en() {
  std::vector<std::string> lex = {
      "a", "the", "and", "at", "to", "what", "color", "is", "shape", "how", "many",
      "background", "shapes", "image", "unchanged", "one", "two", "three",
      "recolor", "add", "remove", "move", "keep",
      "circle", "square", "triangle", "circles", "squares", "triangles",
      "top", "bottom", "left", "right", "center"};
  for (const char* c : kColorNames) lex.push_back(c);
  return lex;
}

std::vector<std::string> to_lang(const std::vector<std::string>& en_words, Lang lang) {
  if (lang == Lang::EN) return en_words;
  std::vector<std::string> out;
  out.reserve(en_words.size());
  for (const auto& w : en_words) out.push_back(xx_word(w));
  return out;
}

namespace {

void append_cell_words(std::vector<std::string>& out, int cell) {
  std::string name = kCellNames[cell];
  size_t sp = name.find(' ');
  if (sp == std::string::npos) {
    out.push_back(name);
  } else {
    out.push_back(name.substr(0, sp));
    out.push_back(name.substr(sp + 1));
  }
}

const char* number_word(int n) {
  switch (n) {
    case 1: return "one";
    case 2: return "two";
    default: return "three";
  }
}

}  // namespace

std::vector<std::string> caption_words(const SceneSpec& spec, Lang lang, Rng& rng) {
  std::vector<std::string> en;
  bool same_shape = spec.objects.size() >= 2;
  bool same_color = same_shape;
  for (const auto& o : spec.objects) {
    same_shape = same_shape && o.shape == spec.objects[0].shape;
    same_color = same_color && o.color == spec.objects[0].color;
  }
  if (same_shape && rng.uniform() < 0.5) {
    // counting phrasing: "two circles" / "three red circles"
    en.push_back(number_word(static_cast<int>(spec.objects.size())));
    if (same_color && rng.uniform() < 0.7) en.push_back(kColorNames[spec.objects[0].color]);
    en.push_back(shape_name_plural(spec.objects[0].shape));
  } else {
    for (size_t i = 0; i < spec.objects.size(); ++i) {
      const auto& o = spec.objects[i];
      if (i) en.push_back("and");
      en.push_back(rng.uniform() < 0.8 ? "a" : "the");
      if (rng.uniform() < 0.85) en.push_back(kColorNames[o.color]);
      en.push_back(shape_name(o.shape));
      if (rng.uniform() < 0.5) {
        en.push_back("at");
        append_cell_words(en, o.cell);
      }
    }
    if (en.empty()) {  // empty scene
      en = {"the", kColorNames[spec.bg], "background"};
    }
  }
  return to_lang(en, lang);
}

QaPair make_qa(const SceneSpec& spec, Lang lang, Rng& rng) {
  // Applicable question templates; each answer is a single word.
  struct Cand {
    std::vector<std::string> q, a;
  };
  std::vector<Cand> cands;
  cands.push_back({{"what", "color", "is", "the", "background"}, {kColorNames[spec.bg]}});
  for (int s = 0; s < 3; ++s) {
    auto sh = static_cast<Shape3>(s);
    int n = 0;
    const SceneObject* obj = nullptr;
    for (const auto& o : spec.objects)
      if (o.shape == sh) {
        ++n;
        obj = &o;
      }
    if (n == 1)
      cands.push_back({{"what", "color", "is", "the", shape_name(sh)}, {kColorNames[obj->color]}});
    if (n >= 1)
      cands.push_back({{"how", "many", shape_name_plural(sh)}, {number_word(n)}});
  }
  if (!spec.objects.empty()) {
    const auto& o = spec.objects[rng.next_below(spec.objects.size())];
    Cand c;
    c.q = {"what", "shape", "is", "at"};
    append_cell_words(c.q, o.cell);
    c.a = {shape_name(o.shape)};
    cands.push_back(c);
  }
  const Cand& pick = cands[rng.next_below(cands.size())];
  return {to_lang(pick.q, lang), to_lang(pick.a, lang)};
}

// --- sampling -------------------------------------------------------------

Split split_of(const SceneSpec& spec) {
  return spec.hash() % 8 == 0 ? Split::Eval : Split::Train;
}

namespace {

SceneSpec sample_scene_any(Rng& rng, int hpx, int wpx) {
  SceneSpec spec;
  spec.hpx = hpx;
  spec.wpx = wpx;
  spec.bg = rng.randint(0, kNumColors);
  int n = 1 + rng.randint(0, 3);
  std::vector<int> cells = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  rng.shuffle(cells);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.shape = static_cast<Shape3>(rng.randint(0, 3));
    do {
      o.color = rng.randint(0, kNumColors);
    } while (o.color == spec.bg);
    o.cell = cells[i];
    o.size = rng.randint(0, 2);
    spec.objects.push_back(o);
  }
  std::sort(spec.objects.begin(), spec.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
  return spec;
}

}  // namespace

SceneSpec sample_scene(Rng& rng, int hpx, int wpx, Split split) {
  for (;;) {
    SceneSpec spec = sample_scene_any(rng, hpx, wpx);
    if (split_of(spec) == split) return spec;
  }
}

EditPair make_edit_pair(Rng& rng, int hpx, int wpx, Split split, Lang lang) {
  for (;;) {
    SceneSpec src = sample_scene_any(rng, hpx, wpx);
    if (split_of(src) != split) continue;
    auto kind = static_cast<EditKind>(rng.randint(0, 5));

    // unique-shape objects are addressable by "the <shape>"
    std::vector<size_t> unique;
    for (size_t i = 0; i < src.objects.size(); ++i) {
      int n = 0;
      for (const auto& o : src.objects) n += o.shape == src.objects[i].shape;
      if (n == 1) unique.push_back(i);
    }
    std::vector<int> free_cells;
    for (int c = 0; c < 9; ++c) {
      bool used = false;
      for (const auto& o : src.objects) used = used || o.cell == c;
      if (!used) free_cells.push_back(c);
    }

    EditPair pair;
    pair.source = src;
    pair.target = src;
    pair.kind = kind;
    switch (kind) {
      case EditKind::Recolor: {
        if (unique.empty()) continue;
        size_t i = unique[rng.next_below(unique.size())];
        auto& o = pair.target.objects[i];
        int nc;
        do {
          nc = rng.randint(0, kNumColors);
        } while (nc == o.color || nc == src.bg);
        pair.instruction = {"recolor", "the", shape_name(o.shape), "to", kColorNames[nc]};
        o.color = nc;
        pair.edited_cells = {o.cell};
        break;
      }
      case EditKind::Add: {
        if (src.objects.size() >= 3 || free_cells.empty()) continue;
        SceneObject o;
        o.shape = static_cast<Shape3>(rng.randint(0, 3));
        do {
          o.color = rng.randint(0, kNumColors);
        } while (o.color == src.bg);
        o.cell = free_cells[rng.next_below(free_cells.size())];
        o.size = rng.randint(0, 2);
        pair.instruction = {"add", "a", kColorNames[o.color], shape_name(o.shape), "at"};
        append_cell_words(pair.instruction, o.cell);
        pair.target.objects.push_back(o);
        std::sort(pair.target.objects.begin(), pair.target.objects.end(),
                  [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
        pair.edited_cells = {o.cell};
        break;
      }
      case EditKind::Remove: {
        if (unique.empty()) continue;
        size_t i = unique[rng.next_below(unique.size())];
        pair.instruction = {"remove", "the", shape_name(src.objects[i].shape)};
        pair.edited_cells = {src.objects[i].cell};
        pair.target.objects.erase(pair.target.objects.begin() + static_cast<long>(i));
        break;
      }
      case EditKind::Move: {
        if (unique.empty() || free_cells.empty()) continue;
        size_t i = unique[rng.next_below(unique.size())];
        int to = free_cells[rng.next_below(free_cells.size())];
        auto& o = pair.target.objects[i];
        pair.instruction = {"move", "the", shape_name(o.shape), "to"};
        append_cell_words(pair.instruction, to);
        pair.edited_cells = {o.cell, to};
        o.cell = to;
        std::sort(pair.target.objects.begin(), pair.target.objects.end(),
                  [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
        break;
      }
      case EditKind::Keep:
        pair.instruction = {"keep", "the", "image", "unchanged"};
        break;
    }
    pair.instruction = to_lang(pair.instruction, lang);
    return pair;
  }
}

}  // namespace uni
