#include "eyewear/sad.hpp"

#include "binary_io.hpp"
#include "eyewear/error.hpp"
#include "eyewear/morphology.hpp"
#include "eyewear/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace eyewear {

namespace fs = std::filesystem;
using nlohmann::json;

void GlassesTemplate::validate() const {
  const std::string who = "template '" + name + "'";
  if (mask.height() < 1 || mask.width() < 1) fail(ErrorCode::MalformedTemplate, who + " has no pixels");
  if (morph::count(mask) == 0) fail(ErrorCode::MalformedTemplate, who + " mask is all background");
  auto inside = [&](Point2 p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0 && p.y >= 0 && p.x <= mask.width() &&
           p.y <= mask.height();
  };
  if (!inside(anchor_left) || !inside(anchor_right)) fail(ErrorCode::MalformedTemplate, who + " anchor outside mask");
  if (!(anchor_left.x < anchor_right.x)) fail(ErrorCode::MalformedTemplate, who + " needs anchor_left.x < anchor_right.x");
  if (style.empty()) fail(ErrorCode::MalformedTemplate, who + " has an empty style");
  if (tint) {
    for (double c : tint->color) {
      if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::MalformedTemplate, who + " tint color outside [0,1]");
    }
    if (!(tint->alpha >= 0.0 && tint->alpha <= 1.0)) fail(ErrorCode::MalformedTemplate, who + " tint alpha outside [0,1]");
  }
}

namespace {

Mask mask_from_png(const RawPng& raw) {
  Mask m(raw.height, raw.width, 0);
  const int ch = raw.channels;
  bool opaque = true;
  if (ch == 2 || ch == 4) {
    for (std::size_t i = ch - 1; i < raw.samples.size(); i += ch) opaque = opaque && raw.samples[i] == 255;
  }
  for (std::size_t p = 0; p < m.size(); ++p) {
    const std::uint8_t* s = raw.samples.data() + p * ch;
    bool fg = false;
    if ((ch == 2 || ch == 4) && !opaque) {
      fg = s[ch - 1] >= 128;
    } else {
      const int colors = ch >= 3 ? 3 : 1;
      fg = *std::max_element(s, s + colors) >= 128;
    }
    m.data()[p] = fg ? 1 : 0;
  }
  return m;
}

Point2 read_point(const json& j, const char* key, const std::string& who) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number() ||
      !j[key][1].is_number()) {
    fail(ErrorCode::MalformedTemplate, who + " sidecar lacks " + key + ":[x,y]");
  }
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

}  // namespace

TemplateSet load_templates(const fs::path& directory) {
  if (!fs::is_directory(directory)) fail(ErrorCode::NoTemplates, directory.string() + " is not a directory");
  std::vector<fs::path> pngs;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") pngs.push_back(entry.path());
  }
  if (pngs.empty()) fail(ErrorCode::NoTemplates, "no template PNGs in " + directory.string());
  std::sort(pngs.begin(), pngs.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  TemplateSet set;
  for (const auto& png : pngs) {
    GlassesTemplate t;
    t.name = png.stem().string();
    const std::string who = "template '" + t.name + "'";
    fs::path sidecar = png;
    sidecar.replace_extension(".json");
    if (!fs::exists(sidecar)) fail(ErrorCode::MalformedTemplate, who + " has no JSON sidecar");
    json meta;
    try {
      std::ifstream in(sidecar);
      meta = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedTemplate, who + " sidecar: " + e.what());
    }
    try {
      t.mask = mask_from_png(read_png_raw(png));
    } catch (const Error& e) {
      fail(ErrorCode::MalformedTemplate, who + ": " + e.message());
    }
    t.anchor_left = read_point(meta, "anchor_left", who);
    t.anchor_right = read_point(meta, "anchor_right", who);
    if (meta.contains("style")) {
      if (!meta["style"].is_string()) fail(ErrorCode::MalformedTemplate, who + " style must be a string");
      t.style = meta["style"].get<std::string>();
    }
    if (meta.contains("tint")) {
      const auto& tj = meta["tint"];
      try {
        Tint tint;
        tint.color = tj.at("color").get<std::array<double, 3>>();
        tint.alpha = tj.at("alpha").get<double>();
        t.tint = tint;
      } catch (const json::exception& e) {
        fail(ErrorCode::MalformedTemplate, who + " tint: " + e.what());
      }
    }
    t.validate();
    set.templates.push_back(std::move(t));
  }
  set.original_count = static_cast<int>(set.templates.size());
  return set;
}

void save_template(const GlassesTemplate& t, const fs::path& directory) {
  t.validate();
  fs::create_directories(directory);
  write_mask_png(t.mask, directory / (t.name + ".png"));
  json meta = {{"anchor_left", {t.anchor_left.x, t.anchor_left.y}},
               {"anchor_right", {t.anchor_right.x, t.anchor_right.y}},
               {"style", t.style}};
  if (t.tint) meta["tint"] = {{"color", t.tint->color}, {"alpha", t.tint->alpha}};
  std::ofstream out(directory / (t.name + ".json"));
  if (!out) fail(ErrorCode::Io, "cannot write sidecar for " + t.name);
  out << meta.dump(2) << '\n';
}

TemplateSet augment_templates(const TemplateSet& set, const std::vector<int>& radii) {
  if (set.templates.empty()) fail(ErrorCode::NoTemplates, "nothing to augment");
  for (int r : radii) {
    if (r < 1) fail(ErrorCode::InvalidConfig, "morphology radii must be >= 1 px");
  }
  TemplateSet out;
  out.original_count = set.original_count > 0 ? set.original_count : static_cast<int>(set.templates.size());
  out.log = set.log;
  for (const auto& t : set.templates) {
    out.templates.push_back(t);
    for (int r : radii) {
      GlassesTemplate dil = t;
      dil.mask = morph::dilate(t.mask, r);
      dil.name = t.name + "+dilate" + std::to_string(r);
      out.templates.push_back(std::move(dil));
      out.log.push_back("dilate " + t.name + " r=" + std::to_string(r));

      GlassesTemplate ero = t;
      ero.mask = morph::erode(t.mask, r);
      if (morph::count(ero.mask) == 0) {
        out.log.push_back("dropped erosion of " + t.name + " r=" + std::to_string(r) + ": mask emptied");
        continue;
      }
      ero.name = t.name + "+erode" + std::to_string(r);
      out.templates.push_back(std::move(ero));
      out.log.push_back("erode " + t.name + " r=" + std::to_string(r));
    }
  }
  return out;
}

GlassesTemplate colorize_template(GlassesTemplate t, const std::array<double, 3>& color, double alpha) {
  for (double c : color) {
    if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::InvalidConfig, "tint color components must lie in [0,1]");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidConfig, "tint alpha must lie in [0,1]");
  t.tint = Tint{color, alpha};
  return t;
}

namespace {

double radical_inverse(int index, int base) {
  double inv = 1.0 / base, f = inv, out = 0.0;
  for (int i = index; i > 0; i /= base, f *= inv) out += f * (i % base);
  return out;
}

}  // namespace

TemplateSet builtin_templates(int count) {
  if (count < 1) fail(ErrorCode::InvalidConfig, "template count must be positive");
  constexpr int kW = 384, kH = 192;
  constexpr double kReach = 160.0;
  namespace r = toy::ranges;
  TemplateSet set;
  for (int i = 0; i < count; ++i) {
    // Low-discrepancy coordinates in the toy parameter ranges. Thickness stays in a band
    // that survives erosion and dilation by 4 template pixels.
    const int k = i + 1;
    toy::GlassesParams g;
    g.presence = 1.0;
    g.half_width = r::kHalfWidth.at(0.1 + 0.8 * radical_inverse(k, 2));
    g.half_height = r::kHalfHeight.at(0.1 + 0.8 * radical_inverse(k, 3));
    g.thickness = r::kThickness.at(0.35 + 0.35 * radical_inverse(k, 5));
    g.squareness = toy::exponent_from_fullness(r::kSquareness.at(0.05 + 0.9 * radical_inverse(k, 7)));
    g.vertical_offset = r::kVerticalOffset.at(0.1 + 0.8 * radical_inverse(k, 11));
    const auto shape = toy::FrameShape::from(kW / 2.0, kH / 2.0, kReach, g);

    GlassesTemplate t;
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02d", i);
    t.name = name;
    t.style = i % 2 == 0 ? kStyleClear : kStyleTinted;
    t.anchor_left = {kW / 2.0 - kReach, kH / 2.0};
    t.anchor_right = {kW / 2.0 + kReach, kH / 2.0};
    t.mask = Mask(kH, kW, 0);
    for (int row = 0; row < kH; ++row) {
      const auto rs = shape.row(row + 0.5);
      for (int col = 0; col < kW; ++col) t.mask(row, col) = rs.in_frame(col + 0.5) ? 1 : 0;
    }
    t.validate();
    set.templates.push_back(std::move(t));
  }
  set.original_count = count;
  return set;
}

Similarity Similarity::from_pairs(Point2 s0, Point2 s1, Point2 d0, Point2 d1) {
  const double sx = s1.x - s0.x, sy = s1.y - s0.y;
  const double dx = d1.x - d0.x, dy = d1.y - d0.y;
  const double den = sx * sx + sy * sy;
  if (!(den > 1e-12)) fail(ErrorCode::MalformedTemplate, "template anchors coincide");
  if (!(dx * dx + dy * dy > 1e-12) || !std::isfinite(dx) || !std::isfinite(dy)) {
    fail(ErrorCode::DegenerateLandmarks, "temple landmarks coincide");
  }
  // Complex division (d1 - d0) / (s1 - s0).
  Similarity s;
  s.a = (dx * sx + dy * sy) / den;
  s.b = (dy * sx - dx * sy) / den;
  s.tx = d0.x - (s.a * s0.x - s.b * s0.y);
  s.ty = d0.y - (s.b * s0.x + s.a * s0.y);
  return s;
}

Point2 Similarity::apply(Point2 p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }

Point2 Similarity::inverse(Point2 p) const {
  const double x = p.x - tx, y = p.y - ty;
  const double den = a * a + b * b;
  return {(a * x + b * y) / den, (a * y - b * x) / den};
}

double Similarity::scale() const { return std::hypot(a, b); }
double Similarity::angle() const { return std::atan2(b, a); }

namespace {

Mask lens_region(const GlassesTemplate& t) {
  return t.style == kStyleTinted ? morph::enclosed_holes(t.mask) : Mask();
}

AugmentedImage paste(const FaceImage& image, const LandmarkSet& landmarks, const GlassesTemplate& t,
                     const Mask& lenses) {
  const Similarity s = Similarity::from_pairs(t.anchor_left, t.anchor_right, landmarks.temple_left(),
                                              landmarks.temple_right());
  const bool shade_lenses = lenses.size() > 0;

  const Rgb8 paint = t.tint ? to_rgb8({t.tint->alpha * t.tint->color[0], t.tint->alpha * t.tint->color[1],
                                       t.tint->alpha * t.tint->color[2]})
                            : Rgb8{0, 0, 0};

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (Point2 corner : {Point2{0, 0}, Point2{double(t.mask.width()), 0}, Point2{0, double(t.mask.height())},
                        Point2{double(t.mask.width()), double(t.mask.height())}}) {
    const Point2 p = s.apply(corner);
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int c0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int c1 = std::min(image.width() - 1, static_cast<int>(std::ceil(x1)));
  const int r0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int r1 = std::min(image.height() - 1, static_cast<int>(std::ceil(y1)));

  AugmentedImage out;
  out.pixels = image;
  out.style = t.style;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Point2 q = s.inverse({c + 0.5, r + 0.5});
      const int tr = static_cast<int>(std::floor(q.y));
      const int tc = static_cast<int>(std::floor(q.x));
      if (!t.mask.contains(tr, tc)) continue;
      if (t.mask(tr, tc)) {
        out.pixels.set(r, c, paint);
      } else if (shade_lenses && lenses(tr, tc)) {
        Rgb8 px = image.at(r, c);
        for (auto& v : px) v = to_byte((1.0 - kTintedLensOpacity) * v / 255.0);
        out.pixels.set(r, c, px);
      }
    }
  }
  return out;
}

}  // namespace

AugmentedImage place_template(const FaceImage& image, const LandmarkSet& landmarks, const GlassesTemplate& t) {
  t.validate();
  return paste(image, landmarks, t, lens_region(t));
}

SADCorpus discover_appearances(const std::vector<FaceImage>& images, const TemplateSet& set,
                               const SynthesisBackend& backend) {
  if (images.empty()) fail(ErrorCode::EmptyInput, "no glasses-free images");
  if (set.templates.empty()) fail(ErrorCode::NoTemplates, "empty template set");
  SADCorpus corpus;
  corpus.templates = set.original_count;
  corpus.augmented_templates = set.augmented_count();
  corpus.backend_fingerprint = backend.fingerprint();
  corpus.entries.reserve(images.size() * set.templates.size());
  std::vector<Mask> lenses;
  for (const auto& t : set.templates) {
    t.validate();
    lenses.push_back(lens_region(t));
  }

  auto wrap = [](const Error& e, const std::string& where) -> Error {
    return Error(ErrorCode::BackendFailure, where + ": " + std::string(to_string(e.code())) + ": " + e.message());
  };
  for (std::size_t k = 0; k < images.size(); ++k) {
    const std::string img_ctx = "image " + std::to_string(k);
    LandmarkSet lm;
    try {
      corpus.free_latents.push_back(backend.encode(images[k]));
      lm = backend.landmarks(images[k]);
    } catch (const Error& e) {
      throw wrap(e, img_ctx);
    }
    for (std::size_t j = 0; j < set.templates.size(); ++j) {
      const auto& t = set.templates[j];
      try {
        AugmentedImage aug = paste(images[k], lm, t, lenses[j]);
        aug.source_image = static_cast<int>(k);
        aug.template_index = static_cast<int>(j);
        corpus.entries.push_back({backend.encode(aug.pixels), t.style, static_cast<int>(k), static_cast<int>(j)});
      } catch (const Error& e) {
        throw wrap(e, img_ctx + ", template " + t.name);
      }
    }
  }
  return corpus;
}

GlassesSubspace fit_corpus(const SADCorpus& corpus, int d_prime, EigenPath path) {
  if (corpus.entries.empty() || corpus.free_latents.empty()) fail(ErrorCode::EmptyCorpus, "corpus has no entries");
  const int per_image = corpus.augmented_templates;
  if (static_cast<std::size_t>(per_image) * corpus.free_latents.size() != corpus.entries.size()) {
    fail(ErrorCode::DimensionMismatch, "corpus entry count is not K * N+");
  }
  const auto& first = corpus.free_latents.front();

  std::vector<DifferentialBlock> blocks;
  std::map<std::string, StyleLatents> styles;
  std::vector<FlatVector> free;
  for (const auto& w : corpus.free_latents) free.push_back(vectorize(w));
  for (int k = 0; k < corpus.images(); ++k) {
    std::vector<FlatVector> codes;
    for (int j = 0; j < per_image; ++j) {
      const auto& e = corpus.entries[static_cast<std::size_t>(k) * per_image + j];
      codes.push_back(vectorize(e.latent));
      styles[e.style].augmented.push_back(codes.back());
    }
    blocks.push_back(differentials(codes, "image-" + std::to_string(k)));
  }
  for (auto& [_, data] : styles) data.glasses_free = free;

  FitOptions opt;
  opt.layers = first.layers();
  opt.channels = first.channels();
  opt.backend_fingerprint = corpus.backend_fingerprint;
  opt.path = path;
  GlassesSubspace sub = fit_subspace(aggregate(blocks), d_prime, styles, opt);
  sub.metadata.images = corpus.images();
  sub.metadata.templates = corpus.templates;
  sub.metadata.augmented_templates = corpus.augmented_templates;
  return sub;
}

namespace {

void write_latent(const LatentCode& w, const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(w.dim()) * 8);
  for (int i = 0; i < w.dim(); ++i) binary::put<double>(bytes, w.flat(i));
  binary::write_file(path, bytes);
}

LatentCode read_latent(const fs::path& path, int layers, int channels) {
  const auto bytes = binary::read_file(path);
  if (bytes.size() != static_cast<std::size_t>(layers) * channels * 8) {
    fail(ErrorCode::DimensionMismatch, path.string() + " has the wrong size");
  }
  binary::Reader in(bytes.data(), bytes.size());
  LatentCode w(layers, channels);
  for (int i = 0; i < w.dim(); ++i) w.flat(i) = in.get<double>();
  return w;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s_%05zu.bin", prefix, i);
  return buf;
}

}  // namespace

void export_corpus(const SADCorpus& corpus, const fs::path& directory) {
  if (corpus.free_latents.empty()) fail(ErrorCode::EmptyCorpus, "nothing to export");
  fs::create_directories(directory);
  json manifest = {{"backend_fingerprint", corpus.backend_fingerprint},
                   {"layers", corpus.free_latents.front().layers()},
                   {"channels", corpus.free_latents.front().channels()},
                   {"templates", corpus.templates},
                   {"augmented_templates", corpus.augmented_templates},
                   {"entries", json::array()},
                   {"free", json::array()}};
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const auto& e = corpus.entries[i];
    const auto file = numbered("entry", i);
    write_latent(e.latent, directory / file);
    manifest["entries"].push_back({{"file", file}, {"image", e.image}, {"template", e.template_index}, {"style", e.style}});
  }
  for (std::size_t i = 0; i < corpus.free_latents.size(); ++i) {
    const auto file = numbered("free", i);
    write_latent(corpus.free_latents[i], directory / file);
    manifest["free"].push_back({{"file", file}, {"image", i}});
  }
  std::ofstream out(directory / "manifest.json");
  if (!out) fail(ErrorCode::Io, "cannot write corpus manifest");
  out << manifest.dump(2) << '\n';
}

SADCorpus import_corpus(const fs::path& directory) {
  json m;
  try {
    std::ifstream in(directory / "manifest.json");
    if (!in) fail(ErrorCode::Io, "no manifest.json in " + directory.string());
    m = json::parse(in);
    SADCorpus c;
    c.backend_fingerprint = m.at("backend_fingerprint").get<std::string>();
    c.templates = m.at("templates").get<int>();
    c.augmented_templates = m.at("augmented_templates").get<int>();
    const int layers = m.at("layers").get<int>();
    const int channels = m.at("channels").get<int>();
    for (const auto& e : m.at("entries")) {
      c.entries.push_back({read_latent(directory / e.at("file").get<std::string>(), layers, channels),
                           e.at("style").get<std::string>(), e.at("image").get<int>(), e.at("template").get<int>()});
    }
    for (const auto& f : m.at("free")) {
      c.free_latents.push_back(read_latent(directory / f.at("file").get<std::string>(), layers, channels));
    }
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("malformed corpus manifest: ") + e.what());
  }
}

}  // namespace eyewear
