#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sbhm/image.hpp"
#include "sbhm/rng.hpp"

namespace sbhm {

enum class ImageFormat { pgm, csv };

inline ImageFormat format_from_path(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return ImageFormat::pgm;
  if (ext == ".csv") return ImageFormat::csv;
  throw InputError("cannot infer image format from extension: " + path);
}

namespace detail {

// Reads the next header token of a PGM stream, skipping whitespace and
// '#' comment lines.
inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#')
        tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  throw InputError("PGM: truncated header");
}

inline int pgm_int(std::istream& in) {
  const std::string tok = pgm_token(in);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InputError("PGM: malformed header token '" + tok + "'");
  }
}

}  // namespace detail

inline GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  const std::string magic = detail::pgm_token(in);
  if (magic != "P2" && magic != "P5") throw InputError("PGM: bad magic '" + magic + "'");
  const int n2 = detail::pgm_int(in);
  const int n1 = detail::pgm_int(in);
  const int maxval = detail::pgm_int(in);
  if (n1 < 1 || n2 < 1) throw InputError("PGM: non-positive dimensions");
  if (maxval < 1 || maxval > 65535) throw InputError("PGM: maxval out of range");

  GrayImage img(n1, n2);
  const double scale = 1.0 / maxval;
  if (magic == "P2") {
    for (auto& v : img.data) {
      const int raw = detail::pgm_int(in);
      if (raw < 0 || raw > maxval) throw InputError("PGM: sample out of range");
      v = raw * scale;
    }
  } else {
    in.get();  // single whitespace byte after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(img.size() * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw InputError("PGM: truncated pixel data");
    for (std::size_t i = 0; i < img.size(); ++i) {
      const int raw = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
      if (raw > maxval) throw InputError("PGM: sample out of range");
      img.data[i] = raw * scale;
    }
  }
  return img;
}

/// Writes a PGM with maxval 65535; values are clamped to [0,1] and quantized.
/// Binary (P5, big-endian) by default, ASCII (P2) on request.
inline void save_pgm(const GrayImage& img, const std::string& path, bool ascii = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  constexpr int maxval = 65535;
  out << (ascii ? "P2" : "P5") << "\n" << img.n2 << " " << img.n1 << "\n" << maxval << "\n";
  auto quantize = [](double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<int>(v * maxval + 0.5);
  };
  if (ascii) {
    for (int i = 0; i < img.n1; ++i) {
      for (int j = 0; j < img.n2; ++j) out << quantize(img.at(i, j)) << (j + 1 < img.n2 ? " " : "\n");
    }
  } else {
    std::vector<unsigned char> buf;
    buf.reserve(img.size() * 2);
    for (double v : img.data) {
      const int q = quantize(v);
      buf.push_back(static_cast<unsigned char>(q >> 8));
      buf.push_back(static_cast<unsigned char>(q & 0xff));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw InputError("I/O failure writing " + path);
}

/// Real-valued matrix CSV: one row per line, optional "# n1 n2" header.
inline GrayImage load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int declared_n1 = -1, declared_n2 = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      hs >> declared_n1 >> declared_n2;
      continue;
    }
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
      } catch (const std::exception&) {
        throw InputError("CSV: malformed cell '" + cell + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("CSV: no data rows in " + path);
  const std::size_t n2 = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != n2) throw InputError("CSV: ragged rows in " + path);
  GrayImage img(static_cast<int>(rows.size()), static_cast<int>(n2));
  for (int i = 0; i < img.n1; ++i)
    for (int j = 0; j < img.n2; ++j) img.at(i, j) = rows[i][j];
  if (declared_n1 > 0 && (declared_n1 != img.n1 || declared_n2 != img.n2))
    throw InputError("CSV: header dimensions disagree with data");
  img.check_finite();
  return img;
}

inline void save_csv(const GrayImage& img, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "# " << img.n1 << " " << img.n2 << "\n";
  char buf[40];
  for (int i = 0; i < img.n1; ++i) {
    for (int j = 0; j < img.n2; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", img.at(i, j));
      out << buf << (j + 1 < img.n2 ? "," : "\n");
    }
  }
  if (!out) throw InputError("I/O failure writing " + path);
}

inline GrayImage load_image(const std::string& path, ImageFormat fmt) {
  GrayImage img = fmt == ImageFormat::pgm ? load_pgm(path) : load_csv(path);
  img.check_finite();
  return img;
}

inline void save_image(const GrayImage& img, const std::string& path, ImageFormat fmt) {
  if (fmt == ImageFormat::pgm)
    save_pgm(img, path);
  else
    save_csv(img, path);
}

/// Deterministic phantom: pixel value = sum of intensities of the ellipses
/// covering the pixel center, plus N(0, noise_sigma^2) noise. Pixel centers
/// sit at (i+0.5, j+0.5) in row/col units.
inline GrayImage generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  GrayImage img(spec.n1, spec.n2, 0.0);
  for (const auto& e : spec.ellipses) {
    const double c = std::cos(e.rotation), s = std::sin(e.rotation);
    for (int i = 0; i < spec.n1; ++i) {
      const double dr = (i + 0.5) - e.center_row;
      for (int j = 0; j < spec.n2; ++j) {
        const double dc = (j + 0.5) - e.center_col;
        const double u = (dr * c + dc * s) / e.semi_a;
        const double v = (-dr * s + dc * c) / e.semi_b;
        if (u * u + v * v <= 1.0) img.at(i, j) += e.intensity;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    for (auto& v : img.data) v += spec.noise_sigma * rng.normal();
  }
  return img;
}

/// Shepp-Logan-flavoured default used by the pipeline when no phantom is
/// configured: a skull-like outer ellipse, an interior cavity and a few
/// small inclusions, sized relative to the lattice.
inline PhantomSpec default_phantom_spec(int n1, int n2, std::uint64_t seed) {
  PhantomSpec spec;
  spec.n1 = n1;
  spec.n2 = n2;
  spec.seed = seed;
  spec.noise_sigma = 0.02;
  const double r = n1, c = n2;
  spec.ellipses = {
      {0.50 * r, 0.50 * c, 0.44 * r, 0.36 * c, 0.0, 0.90},
      {0.50 * r, 0.50 * c, 0.38 * r, 0.30 * c, 0.0, -0.40},
      {0.42 * r, 0.40 * c, 0.13 * r, 0.09 * c, 0.45, 0.25},
      {0.42 * r, 0.62 * c, 0.11 * r, 0.08 * c, -0.40, 0.30},
      {0.66 * r, 0.50 * c, 0.07 * r, 0.07 * c, 0.0, 0.35},
      {0.30 * r, 0.50 * c, 0.05 * r, 0.04 * c, 0.0, -0.20},
  };
  return spec;
}

}  // namespace sbhm
