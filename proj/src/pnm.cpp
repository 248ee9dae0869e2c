#include "gskit/pnm.hpp"

#include "gskit/util.hpp"

#include <cctype>
#include <stdexcept>

namespace gskit::pnm {

std::string encode(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw std::invalid_argument("PNM supports 1 or 3 channels");
  const std::size_t n = static_cast<std::size_t>(r.width * r.height * r.channels);
  if (r.samples.size() != n) throw std::invalid_argument("PNM sample count does not match extents");
  std::string out = (r.channels == 1 ? "P5\n" : "P6\n") + std::to_string(r.width) + " " + std::to_string(r.height) +
                    "\n" + std::to_string(r.maxval) + "\n";
  const bool wide = r.maxval > 255;
  out.reserve(out.size() + n * (wide ? 2 : 1));
  for (std::uint16_t v : r.samples) {
    if (v > r.maxval) throw std::invalid_argument("PNM sample exceeds maxval");
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

namespace {

struct Cursor {
  const std::string& bytes;
  const std::string& name;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const { throw std::runtime_error(name + ": " + what); }

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long number() {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail("malformed PNM header");
    return std::stol(bytes.substr(start, pos - start));
  }
};

}  // namespace

Raster decode(const std::string& bytes, const std::string& name) {
  Cursor cur{bytes, name};
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) cur.fail("not a binary PNM (P5/P6)");
  cur.pos = 2;
  Raster r;
  r.channels = bytes[1] == '5' ? 1 : 3;
  r.width = cur.number();
  r.height = cur.number();
  r.maxval = static_cast<int>(cur.number());
  if (r.width <= 0 || r.height <= 0 || r.maxval <= 0 || r.maxval > 65535) cur.fail("invalid PNM header values");
  if (cur.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) cur.fail("malformed PNM header");
  ++cur.pos;
  const bool wide = r.maxval > 255;
  const std::size_t n = static_cast<std::size_t>(r.width * r.height * r.channels);
  if (bytes.size() - cur.pos != n * (wide ? 2 : 1)) cur.fail("truncated or oversized PNM payload");
  r.samples.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos);
  for (std::size_t i = 0; i < n; ++i) {
    r.samples[i] = wide ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
    if (r.samples[i] > r.maxval) cur.fail("sample exceeds maxval");
  }
  return r;
}

Raster read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing file " + path.filename().string());
  return decode(read_file(path), path.filename().string());
}

void write(const std::filesystem::path& path, const Raster& raster) { write_file_atomic(path, encode(raster)); }

}  // namespace gskit::pnm
