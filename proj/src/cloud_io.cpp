#include "lkreg/cloud.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace lkreg {

namespace {

struct Line {
  std::string_view text;
  std::size_t number;  // 1-based
};

// Splits into lines, dropping blank lines and '#' comments.
std::vector<Line> content_lines(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    std::string_view line = text.substr(pos, end - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (!line.empty()) out.push_back({line, number});
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double to_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  return v;
}

long to_count(std::string_view tok, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0)
    throw ParseError("invalid count '" + std::string(tok) + "'", line);
  return v;
}

Vec3 xyz_from(const std::vector<std::string_view>& tok, std::size_t line, std::size_t ix = 0,
              std::size_t iy = 1, std::size_t iz = 2) {
  const std::size_t need = std::max({ix, iy, iz}) + 1;
  if (tok.size() < need)
    throw ParseError("expected at least " + std::to_string(need) + " values, got " +
                         std::to_string(tok.size()),
                     line);
  return {to_double(tok[ix], line), to_double(tok[iy], line), to_double(tok[iz], line)};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, ptr);
}

}  // namespace

CloudFormat parse_format(std::string_view name) {
  const std::string n = lower(name);
  if (n == "xyz") return CloudFormat::kXyz;
  if (n == "off") return CloudFormat::kOff;
  if (n == "ply" || n == "ply-ascii") return CloudFormat::kPlyAscii;
  throw UnsupportedFormat("unsupported cloud format '" + std::string(name) + "'");
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  if (!ext.empty() && ext.front() == '.') ext.erase(0, 1);
  return parse_format(ext);
}

PointCloud parse_xyz(std::string_view text, std::string id) {
  std::vector<Vec3> pts;
  for (const Line& l : content_lines(text)) pts.push_back(xyz_from(tokens(l.text), l.number));
  if (pts.empty()) throw ParseError("no points in xyz data", 1);
  Points p(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = pts[i];
  return PointCloud(std::move(p), std::move(id));
}

PointCloud parse_off(std::string_view text, std::string id) {
  const std::vector<Line> lines = content_lines(text);
  if (lines.empty()) throw ParseError("empty OFF data", 1);
  std::vector<std::string_view> head = tokens(lines[0].text);
  std::size_t next = 1;
  // Some exporters glue the counts to the magic ("OFF8 12 0").
  std::string_view magic = head[0];
  if (magic.size() < 3 || lower(magic.substr(0, 3)) != "off")
    throw ParseError("missing OFF header", lines[0].number);
  std::vector<std::string_view> counts;
  if (magic.size() > 3) {
    counts.push_back(magic.substr(3));
    counts.insert(counts.end(), head.begin() + 1, head.end());
  } else if (head.size() > 1) {
    counts.assign(head.begin() + 1, head.end());
  } else {
    if (lines.size() < 2) throw ParseError("missing OFF counts", lines[0].number);
    counts = tokens(lines[1].text);
    next = 2;
  }
  const std::size_t count_line = lines[next - 1].number;
  if (counts.empty()) throw ParseError("missing OFF vertex count", count_line);
  const long nv = to_count(counts[0], count_line);
  if (nv < 1) throw ParseError("OFF file declares no vertices", count_line);
  if (lines.size() < next + static_cast<std::size_t>(nv))
    throw ParseError("OFF file ends before all vertices were read",
                     lines.empty() ? 1 : lines.back().number);
  Points p(3, nv);
  for (long i = 0; i < nv; ++i) {
    const Line& l = lines[next + static_cast<std::size_t>(i)];
    p.col(i) = xyz_from(tokens(l.text), l.number);
  }
  return PointCloud(std::move(p), std::move(id));
}

PointCloud parse_ply_ascii(std::string_view text, std::string id) {
  const std::vector<Line> lines = content_lines(text);
  if (lines.empty() || lines[0].text != "ply") throw ParseError("missing ply magic", 1);

  struct Element {
    std::string name;
    long count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  std::size_t i = 1;
  bool ascii = false;
  for (; i < lines.size(); ++i) {
    const auto tok = tokens(lines[i].text);
    if (tok[0] == "end_header") {
      ++i;
      break;
    }
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("bad format line", lines[i].number);
      if (tok[1] != "ascii") throw UnsupportedFormat("only ASCII PLY is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() < 3) throw ParseError("bad element line", lines[i].number);
      elements.push_back({std::string(tok[1]), to_count(tok[2], lines[i].number), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before element", lines[i].number);
      elements.back().props.emplace_back(tok.back());
    }
  }
  if (!ascii) throw ParseError("missing format line", 1);

  std::size_t row = i;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      row += static_cast<std::size_t>(e.count);
      continue;
    }
    auto find = [&](const char* name) -> std::size_t {
      auto it = std::find(e.props.begin(), e.props.end(), name);
      if (it == e.props.end()) throw ParseError(std::string("vertex lacks property ") + name, 1);
      return static_cast<std::size_t>(it - e.props.begin());
    };
    const std::size_t ix = find("x"), iy = find("y"), iz = find("z");
    if (e.count < 1) throw ParseError("PLY declares no vertices", 1);
    if (lines.size() < row + static_cast<std::size_t>(e.count))
      throw ParseError("PLY ends before all vertices were read", lines.back().number);
    Points p(3, e.count);
    for (long k = 0; k < e.count; ++k) {
      const Line& l = lines[row + static_cast<std::size_t>(k)];
      p.col(k) = xyz_from(tokens(l.text), l.number, ix, iy, iz);
    }
    return PointCloud(std::move(p), std::move(id));
  }
  throw ParseError("PLY has no vertex element", 1);
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  const std::string text = read_file(path);
  std::string id = path.stem().string();
  switch (format) {
    case CloudFormat::kXyz: return parse_xyz(text, std::move(id));
    case CloudFormat::kOff: return parse_off(text, std::move(id));
    case CloudFormat::kPlyAscii: return parse_ply_ascii(text, std::move(id));
  }
  throw UnsupportedFormat("unknown format");
}

PointCloud load_cloud(const std::filesystem::path& path) {
  return load_cloud(path, format_from_path(path));
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const Points& p = cloud.points();
  switch (format) {
    case CloudFormat::kXyz: break;
    case CloudFormat::kOff: out << "OFF\n" << p.cols() << " 0 0\n"; break;
    case CloudFormat::kPlyAscii:
      out << "ply\nformat ascii 1.0\nelement vertex " << p.cols()
          << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
      break;
  }
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    out << fmt(p(0, i)) << ' ' << fmt(p(1, i)) << ' ' << fmt(p(2, i)) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

}  // namespace lkreg
