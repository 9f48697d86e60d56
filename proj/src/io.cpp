#include "burstdepth/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "burstdepth/error.hpp"

namespace burstdepth::io {

namespace {

Error io_error(const std::string& what, const fs::path& path) {
  return Error(ErrorCode::kIo, what + ": " + path.string());
}

template <typename T>
T byteswap(T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const fs::path& path) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw io_error("truncated file", path);
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Image read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (m.empty()) throw io_error("cannot read image", path);
  double scale = 1.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: break;
    default: throw io_error("unsupported pixel depth", path);
  }
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2RGB);
  else if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  cv::Mat f;
  m.convertTo(f, CV_MAKETYPE(CV_32F, m.channels()), scale);
  Image out(f.cols, f.rows, f.channels());
  for (int y = 0; y < f.rows; ++y) {
    std::memcpy(&out.at(0, y), f.ptr<float>(y), sizeof(float) * f.cols * f.channels());
  }
  return out;
}

void write_image(const fs::path& path, const Image& image, bool sixteen_bit) {
  const int nc = image.channels();
  if (nc != 1 && nc != 3) throw Error(ErrorCode::kShapeMismatch, "can only write 1- or 3-channel images");
  cv::Mat f(image.height(), image.width(), CV_MAKETYPE(CV_32F, nc));
  for (int y = 0; y < image.height(); ++y) {
    std::memcpy(f.ptr<float>(y), image.pixels().data() + std::size_t(y) * image.width() * nc,
                sizeof(float) * image.width() * nc);
  }
  cv::Mat clipped = cv::max(cv::min(f, 1.0), 0.0);
  cv::Mat q;
  clipped.convertTo(q, sixteen_bit ? CV_MAKETYPE(CV_16U, nc) : CV_MAKETYPE(CV_8U, nc),
                    sixteen_bit ? 65535.0 : 255.0);
  if (nc == 3) cv::cvtColor(q, q, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), q)) throw io_error("cannot write image", path);
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw io_error("not a directory", dir);
  static const char* kExtensions[] = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".ppm", ".pgm"};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(std::begin(kExtensions), std::end(kExtensions), ext) != std::end(kExtensions)) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> read_frames(const fs::path& dir) {
  std::vector<Image> frames;
  for (const fs::path& p : list_frames(dir)) frames.push_back(read_image(p));
  return frames;
}

void write_pfm(const fs::path& path, const PfmImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorCode::kShapeMismatch, "PFM holds 1 or 3 channels");
  }
  if (image.data.size() != std::size_t(image.width) * image.height * image.channels) {
    throw Error(ErrorCode::kShapeMismatch, "PFM data size does not match its dimensions");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing", path);
  os << (image.channels == 1 ? "Pf" : "PF") << '\n'
     << image.width << ' ' << image.height << '\n'
     << "-1.0\n";
  const std::size_t row = std::size_t(image.width) * image.channels;
  for (int y = image.height - 1; y >= 0; --y) {
    for (std::size_t k = 0; k < row; ++k) write_le(os, image.data[y * row + k]);
  }
  if (!os) throw io_error("write failed", path);
}

PfmImage read_pfm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open", path);
  std::string magic;
  PfmImage out;
  double scale = 0.0;
  is >> magic >> out.width >> out.height >> scale;
  if (!is || (magic != "Pf" && magic != "PF") || out.width <= 0 || out.height <= 0 || scale == 0.0) {
    throw io_error("malformed PFM header", path);
  }
  is.get();  // the single whitespace byte ending the header
  out.channels = magic == "PF" ? 3 : 1;
  const bool swap = (scale < 0.0) != (std::endian::native == std::endian::little);
  const std::size_t row = std::size_t(out.width) * out.channels;
  out.data.resize(row * out.height);
  for (int y = out.height - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(&out.data[y * row]), sizeof(float) * row);
    if (!is) throw io_error("truncated PFM", path);
  }
  if (swap) {
    for (float& v : out.data) v = byteswap(v);
  }
  return out;
}

PfmImage depth_to_pfm(const std::vector<double>& depth, int width, int height) {
  if (depth.size() != std::size_t(width) * height) {
    throw Error(ErrorCode::kShapeMismatch, "depth size does not match its dimensions");
  }
  PfmImage out{width, height, 1, std::vector<float>(depth.size())};
  for (std::size_t i = 0; i < depth.size(); ++i) {
    out.data[i] = std::isfinite(depth[i]) && depth[i] > 0.0 ? static_cast<float>(depth[i])
                                                             : std::numeric_limits<float>::infinity();
  }
  return out;
}

InverseDepthMap inverse_depth_from_pfm(const PfmImage& depth) {
  if (depth.channels != 1) throw Error(ErrorCode::kShapeMismatch, "depth PFM must have one channel");
  InverseDepthMap w(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const float z = depth.data[i];
    if (std::isfinite(z) && z > 0.0f) {
      w.data[i] = 1.0 / z;
    } else {
      w.invalidate(i);
    }
  }
  return w;
}

void write_flo(const fs::path& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing", path);
  os.write("PIEH", 4);
  write_le<std::int32_t>(os, flow.width);
  write_le<std::int32_t>(os, flow.height);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const bool ok = flow.valid[i];
    write_le<float>(os, ok ? static_cast<float>(flow.du(i)) : kFloUnknown);
    write_le<float>(os, ok ? static_cast<float>(flow.dv(i)) : kFloUnknown);
  }
  if (!os) throw io_error("write failed", path);
}

FlowField read_flo(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open", path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PIEH", 4) != 0) throw io_error("not a .flo file", path);
  const auto w = read_le<std::int32_t>(is, path);
  const auto h = read_le<std::int32_t>(is, path);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) throw io_error("bad .flo dimensions", path);
  FlowField flow(w, h);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const float u = read_le<float>(is, path);
    const float v = read_le<float>(is, path);
    if (std::abs(u) > 1e9f || std::abs(v) > 1e9f || !std::isfinite(u) || !std::isfinite(v)) {
      flow.invalidate(i);
    } else {
      flow.set(i, u, v);
    }
  }
  return flow;
}

CalibrationFile read_calibration(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open calibration", path);
  CalibrationFile calib;
  bool seen[4] = {false, false, false, false};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      const std::string note = trim(line.substr(hash + 1));
      if (!note.empty()) calib.comment += (calib.comment.empty() ? "" : "\n") + note;
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw io_error("line " + std::to_string(line_no) + " is not key = value in", path);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    double number = 0.0;
    try {
      std::size_t used = 0;
      number = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw io_error("non-numeric value for '" + key + "' in", path);
    }
    if (key == "fx") calib.K.fx = number, seen[0] = true;
    else if (key == "fy") calib.K.fy = number, seen[1] = true;
    else if (key == "cx") calib.K.cx = number, seen[2] = true;
    else if (key == "cy") calib.K.cy = number, seen[3] = true;
    else if (key == "width") calib.width = static_cast<int>(number);
    else if (key == "height") calib.height = static_cast<int>(number);
    else throw io_error("unknown key '" + key + "' in", path);
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) throw io_error("calibration needs fx, fy, cx and cy", path);
  if (!calib.K.valid()) throw Error(ErrorCode::kConfiguration, "calibration focal lengths must be positive");
  return calib;
}

void write_calibration(const fs::path& path, const CalibrationFile& calib) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing", path);
  if (!calib.comment.empty()) {
    std::istringstream lines(calib.comment);
    for (std::string l; std::getline(lines, l);) os << "# " << l << '\n';
  }
  os << std::setprecision(17) << "fx = " << calib.K.fx << "\nfy = " << calib.K.fy << "\ncx = " << calib.K.cx
     << "\ncy = " << calib.K.cy << '\n';
  if (calib.width > 0) os << "width = " << calib.width << '\n';
  if (calib.height > 0) os << "height = " << calib.height << '\n';
}

void write_poses(const fs::path& path, const std::vector<SmallPose>& poses) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing", path);
  os << "# frame rx ry rz tx ty tz\n" << std::setprecision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const SmallPose& p = poses[i];
    os << i << ' ' << p.r.x() << ' ' << p.r.y() << ' ' << p.r.z() << ' ' << p.t.x() << ' ' << p.t.y()
       << ' ' << p.t.z() << '\n';
  }
}

std::vector<SmallPose> read_poses(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open pose table", path);
  std::vector<SmallPose> poses;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t index = 0;
    SmallPose p;
    ss >> index >> p.r.x() >> p.r.y() >> p.r.z() >> p.t.x() >> p.t.y() >> p.t.z();
    if (!ss || index != poses.size()) throw io_error("malformed pose line '" + line + "' in", path);
    poses.push_back(p);
  }
  return poses;
}

Image colorize_inverse_depth(const InverseDepthMap& w) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!w.valid[i]) continue;
    lo = std::min(lo, w.data[i]);
    hi = std::max(hi, w.data[i]);
  }
  cv::Mat gray(w.height, w.width, CV_8U, cv::Scalar(0));
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < w.height; ++y) {
    for (int x = 0; x < w.width; ++x) {
      const std::size_t i = w.index(x, y);
      if (w.valid[i]) gray.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(255.0 * (w.data[i] - lo) / span);
    }
  }
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_TURBO);
  Image out(w.width, w.height, 3);
  for (int y = 0; y < w.height; ++y) {
    for (int x = 0; x < w.width; ++x) {
      if (!w.valid[w.index(x, y)]) continue;
      const cv::Vec3b bgr = color.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = bgr[2 - c] / 255.0f;
    }
  }
  return out;
}

}  // namespace burstdepth::io
