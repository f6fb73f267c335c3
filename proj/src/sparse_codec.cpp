#include "artkit/sparse_codec.hpp"

#include "artkit/error.hpp"

#include <algorithm>
#include <charconv>

namespace artkit {

CodecProfile CodecProfile::by_name(std::string_view name) {
  if (name == "8x8x8") return compact();
  if (name == "16x8x8") return extended();
  throw Error(ErrorCode::InvalidArgument, "unknown codec profile '" + std::string(name) + "'");
}

std::string CodecProfile::name() const {
  return std::to_string(dims.x) + "x" + std::to_string(dims.y) + "x" + std::to_string(dims.z);
}

std::uint32_t linearize(const CellCoord& c, const GridDims& dims) {
  if (c.x < 0 || c.x >= dims.x || c.y < 0 || c.y >= dims.y || c.z < 0 || c.z >= dims.z) {
    throw Error(ErrorCode::OutOfRange, "coordinate (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                                           "," + std::to_string(c.z) + ") outside grid");
  }
  return static_cast<std::uint32_t>(dims.y * dims.z * c.x + dims.z * c.y + c.z);
}

CellCoord delinearize(std::uint32_t index, const GridDims& dims) {
  if (index >= dims.cell_count()) {
    throw Error(ErrorCode::OutOfRange, "index " + std::to_string(index) + " outside grid of " +
                                           std::to_string(dims.cell_count()) + " cells");
  }
  const auto yz = static_cast<std::uint32_t>(dims.y * dims.z);
  const auto rem = index % yz;
  return {static_cast<int>(index / yz), static_cast<int>(rem / dims.z), static_cast<int>(rem % dims.z)};
}

TokenSequence tokenize_grid(const IndexGrid& grid, const CodecProfile& profile) {
  if (!(grid.dims == profile.dims)) {
    throw Error(ErrorCode::DimensionMismatch, "index grid " + std::to_string(grid.dims.x) + "x" +
                                                  std::to_string(grid.dims.y) + "x" + std::to_string(grid.dims.z) +
                                                  " does not match profile " + profile.name());
  }
  TokenSequence seq{profile, {}};
  // x-major storage order is exactly ascending xyz.
  for (std::size_t i = 0; i < grid.indices.size(); ++i) {
    const auto k = grid.indices[i];
    if (k >= profile.codebook_size) {
      throw Error(ErrorCode::IndexOutOfCodebook,
                  "cell " + std::to_string(i) + " has index " + std::to_string(k));
    }
    if (k != 0) seq.tokens.push_back({static_cast<std::uint32_t>(i), k});
  }
  return seq;
}

IndexGrid densify(const TokenSequence& seq) {
  IndexGrid grid(seq.profile.dims);
  for (const auto& t : seq.tokens) {
    if (t.xyz >= grid.indices.size()) throw Error(ErrorCode::OutOfRange, "xyz " + std::to_string(t.xyz));
    grid.indices[t.xyz] = t.k;
  }
  return grid;
}

std::string serialize_tokens(const TokenSequence& seq) {
  std::string out;
  out.reserve(seq.tokens.size() * 18);
  for (const auto& t : seq.tokens) {
    if (!out.empty()) out += ' ';
    out += kVoxelMarker;
    out += ' ';
    out += std::to_string(t.xyz);
    out += ' ';
    out += std::to_string(t.k);
  }
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  // Returns false at end of input.
  bool next(std::string_view& word, std::size_t& offset) {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return false;
    offset = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    word = text_.substr(offset, pos_ - offset);
    return true;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

[[noreturn]] void malformed(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::MalformedToken, "byte " + std::to_string(offset) + ": " + what);
}

std::uint32_t read_number(TokenReader& reader, const char* role) {
  std::string_view word;
  std::size_t offset = 0;
  if (!reader.next(word, offset)) malformed(offset, std::string("stream ends before ") + role);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
  if (ec == std::errc::result_out_of_range || (ec == std::errc() && value > UINT32_MAX)) {
    throw Error(ErrorCode::OutOfRange, "byte " + std::to_string(offset) + ": " + role + " too large");
  }
  if (ec != std::errc() || ptr != word.data() + word.size()) {
    malformed(offset, std::string("expected decimal ") + role + ", got '" + std::string(word) + "'");
  }
  return static_cast<std::uint32_t>(value);
}

}  // namespace

TokenSequence parse_tokens(std::string_view text, const CodecProfile& profile) {
  TokenSequence seq{profile, {}};
  TokenReader reader(text);
  std::string_view word;
  std::size_t offset = 0;
  const auto cells = profile.cell_count();
  while (reader.next(word, offset)) {
    if (word != kVoxelMarker) malformed(offset, "expected <voxel>, got '" + std::string(word) + "'");
    const auto xyz = read_number(reader, "xyz");
    const auto k = read_number(reader, "K");
    if (xyz >= cells) {
      throw Error(ErrorCode::OutOfRange, "xyz " + std::to_string(xyz) + " exceeds max " + std::to_string(cells - 1));
    }
    if (k == 0 || k >= profile.codebook_size) {
      throw Error(ErrorCode::OutOfRange, "K " + std::to_string(k) + " outside [1, " +
                                             std::to_string(profile.codebook_size - 1) + "]");
    }
    seq.tokens.push_back({xyz, k});
  }
  std::stable_sort(seq.tokens.begin(), seq.tokens.end(),
                   [](const VoxelToken& a, const VoxelToken& b) { return a.xyz < b.xyz; });
  auto dup = std::adjacent_find(seq.tokens.begin(), seq.tokens.end(),
                                [](const VoxelToken& a, const VoxelToken& b) { return a.xyz == b.xyz; });
  if (dup != seq.tokens.end()) {
    throw Error(ErrorCode::DuplicateCoordinate, "xyz " + std::to_string(dup->xyz) + " appears more than once");
  }
  return seq;
}

CompressionStats compression_stats(const TokenSequence& seq) {
  CompressionStats s;
  s.sparse_tokens = seq.tokens.size();
  s.dense_tokens = seq.profile.cell_count();
  s.reduction = s.dense_tokens == 0 ? 0.0
                                    : 1.0 - static_cast<double>(s.sparse_tokens) / static_cast<double>(s.dense_tokens);
  return s;
}

}  // namespace artkit
