#include "fadet/pgm.hpp"

#include <algorithm>
#include <fstream>

namespace fadet {

void write_pgm(const std::string& path, const std::vector<double>& values,
               int64_t height, int64_t width) {
  if (static_cast<int64_t>(values.size()) != height * width) {
    throw ContractError("pgm buffer does not match " + std::to_string(height) +
                        "x" + std::to_string(width));
  }
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  double span = hi - lo;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ContractError("cannot write pgm: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  for (double v : values) {
    unsigned char byte =
        span <= 0.0 ? 0
                    : static_cast<unsigned char>(
                          std::clamp((v - lo) / span * 255.0, 0.0, 255.0));
    os.put(static_cast<char>(byte));
  }
}

namespace {

int next_token(std::istream& is) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int value;
  is >> value;
  return value;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open pgm: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P2") {
    throw ContractError("unsupported pgm magic '" + magic + "' in " + path);
  }
  int64_t width = next_token(is);
  int64_t height = next_token(is);
  int64_t maxval = next_token(is);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw ContractError("malformed pgm header in " + path);
  }
  std::vector<double> values(static_cast<size_t>(width * height));
  if (magic == "P5") {
    is.get();  // single whitespace after maxval
    for (auto& v : values) {
      int hi = is.get();
      if (maxval > 255) {
        int lo = is.get();
        v = static_cast<double>(hi * 256 + lo) / maxval;
      } else {
        v = static_cast<double>(hi) / maxval;
      }
    }
  } else {
    for (auto& v : values) v = static_cast<double>(next_token(is)) / maxval;
  }
  if (!is) throw ContractError("truncated pgm: " + path);
  return Tensor::from_data({height, width, 1}, std::move(values));
}

}  // namespace fadet
