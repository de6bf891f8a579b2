#include "reef/archive.hpp"

#include "reef/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include <sys/stat.h>

namespace reef {
namespace {

constexpr std::size_t kBlock = 512;

[[noreturn]] void corrupt(std::string const &why) {
  throw Error(ErrorKind::IoError, "malformed archive: " + why);
}

void put_octal(char *field, std::size_t width, std::uint64_t value) {
  // width includes the trailing NUL
  std::string digits(width - 1, '0');
  for (std::size_t i = width - 1; i-- > 0;) {
    digits[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  std::memcpy(field, digits.data(), width - 1);
  field[width - 1] = '\0';
}

std::uint64_t get_octal(char const *field, std::size_t width) {
  std::uint64_t value = 0;
  std::size_t i = 0;
  while (i < width && (field[i] == ' ' || field[i] == '\0')) {
    ++i;
  }
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) {
    value = (value << 3) | static_cast<std::uint64_t>(field[i] - '0');
  }
  return value;
}

std::string get_string(char const *field, std::size_t width) {
  return std::string(field, strnlen(field, width));
}

std::uint32_t read_le32(std::string_view d, std::size_t off) {
  if (off + 4 > d.size()) {
    corrupt("truncated zip record");
  }
  auto b = reinterpret_cast<unsigned char const *>(d.data() + off);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint16_t read_le16(std::string_view d, std::size_t off) {
  if (off + 2 > d.size()) {
    corrupt("truncated zip record");
  }
  auto b = reinterpret_cast<unsigned char const *>(d.data() + off);
  return static_cast<std::uint16_t>(b[0] | b[1] << 8);
}

std::string inflate_raw(std::string_view in, std::size_t expected) {
  std::string out(expected, '\0');
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
    corrupt("inflateInit failed");
  }
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef *>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    corrupt("bad deflate stream");
  }
  return out;
}

} // namespace

std::string gzip_compress(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, 9, Z_DEFLATED, MAX_WBITS + 16, 9, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorKind::IoError, "deflateInit failed");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32, '\0');
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef *>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) {
    throw Error(ErrorKind::IoError, "gzip compression failed");
  }
  return out;
}

std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, MAX_WBITS + 32) != Z_OK) {
    corrupt("inflateInit failed");
  }
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::array<char, 64 * 1024> buf;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef *>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      corrupt("bad gzip stream");
    }
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      corrupt("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string write_tar_gz(std::vector<ArchiveEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](auto const &a, auto const &b) { return a.path < b.path; });
  std::string tar;
  for (auto const &e : entries) {
    std::array<char, kBlock> h{};
    std::string name = e.path;
    std::string prefix;
    if (name.size() > 100) {
      auto cut = name.rfind('/', 155);
      if (cut == std::string::npos || name.size() - cut - 1 > 100) {
        throw Error(ErrorKind::IoError, "path too long for ustar: " + e.path);
      }
      prefix = name.substr(0, cut);
      name = name.substr(cut + 1);
    }
    std::memcpy(h.data(), name.data(), name.size());
    put_octal(h.data() + 100, 8, e.executable ? 0755 : 0644);
    put_octal(h.data() + 108, 8, 0);
    put_octal(h.data() + 116, 8, 0);
    put_octal(h.data() + 124, 12, e.bytes.size());
    put_octal(h.data() + 136, 12, 0);
    h[156] = '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    std::memcpy(h.data() + 345, prefix.data(), prefix.size());
    std::memset(h.data() + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) {
      sum += static_cast<unsigned char>(c);
    }
    put_octal(h.data() + 148, 7, sum);
    h[155] = ' ';
    tar.append(h.data(), h.size());
    tar.append(e.bytes);
    tar.append((kBlock - e.bytes.size() % kBlock) % kBlock, '\0');
  }
  tar.append(2 * kBlock, '\0');
  return gzip_compress(tar);
}

std::vector<ArchiveEntry> read_tar_gz(std::string_view data) {
  std::string tar = gzip_decompress(data);
  std::vector<ArchiveEntry> out;
  std::size_t off = 0;
  std::string long_name;
  while (off + kBlock <= tar.size()) {
    char const *h = tar.data() + off;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) {
      break;
    }
    unsigned stored = static_cast<unsigned>(get_octal(h + 148, 8));
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
      sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    }
    if (sum != stored) {
      corrupt("header checksum mismatch");
    }
    auto size = get_octal(h + 124, 12);
    char type = h[156];
    off += kBlock;
    if (off + size > tar.size()) {
      corrupt("truncated member");
    }
    std::string_view body(tar.data() + off, size);
    off += (size + kBlock - 1) / kBlock * kBlock;

    std::string name = get_string(h, 100);
    if (std::memcmp(h + 257, "ustar", 5) == 0) {
      auto prefix = get_string(h + 345, 155);
      if (!prefix.empty()) {
        name = prefix + "/" + name;
      }
    }
    if (!long_name.empty()) {
      name = long_name;
      long_name.clear();
    }
    if (type == 'L') {
      long_name = std::string(body.substr(0, strnlen(body.data(), body.size())));
      continue;
    }
    if (type == 'x') {
      // pax extended header: "<len> key=value\n" records; only path matters
      std::size_t p = 0;
      while (p < body.size()) {
        auto space = body.find(' ', p);
        if (space == std::string_view::npos) {
          break;
        }
        auto len = std::stoul(std::string(body.substr(p, space - p)));
        auto record = body.substr(space + 1, len - (space - p) - 2);
        if (record.starts_with("path=")) {
          long_name = std::string(record.substr(5));
        }
        p += len;
      }
      continue;
    }
    if (type != '0' && type != '\0') {
      continue; // directories, links, global headers
    }
    while (name.starts_with("./")) {
      name.erase(0, 2);
    }
    auto mode = get_octal(h + 100, 8);
    out.push_back({name, std::string(body), (mode & 0111) != 0});
  }
  return out;
}

std::vector<ArchiveEntry> read_zip(std::string_view d) {
  if (d.size() < 22) {
    corrupt("too small for zip");
  }
  std::size_t eocd = std::string_view::npos;
  std::size_t lowest = d.size() >= 22 + 65535 ? d.size() - 22 - 65535 : 0;
  for (std::size_t p = d.size() - 22 + 1; p-- > lowest;) {
    if (read_le32(d, p) == 0x06054b50) {
      eocd = p;
      break;
    }
  }
  if (eocd == std::string_view::npos) {
    corrupt("no end of central directory");
  }
  auto count = read_le16(d, eocd + 10);
  std::size_t cd = read_le32(d, eocd + 16);
  std::vector<ArchiveEntry> out;
  for (unsigned i = 0; i < count; ++i) {
    if (read_le32(d, cd) != 0x02014b50) {
      corrupt("bad central directory entry");
    }
    auto method = read_le16(d, cd + 10);
    auto crc = read_le32(d, cd + 16);
    std::size_t csize = read_le32(d, cd + 20);
    std::size_t usize = read_le32(d, cd + 24);
    auto name_len = read_le16(d, cd + 28);
    auto extra_len = read_le16(d, cd + 30);
    auto comment_len = read_le16(d, cd + 32);
    auto external = read_le32(d, cd + 38);
    std::size_t local = read_le32(d, cd + 42);
    if (cd + 46 + name_len > d.size()) {
      corrupt("truncated name");
    }
    std::string name(d.substr(cd + 46, name_len));
    cd += 46 + name_len + extra_len + comment_len;

    if (read_le32(d, local) != 0x04034b50) {
      corrupt("bad local header");
    }
    std::size_t data_off = local + 30 + read_le16(d, local + 26) + read_le16(d, local + 28);
    if (data_off + csize > d.size()) {
      corrupt("truncated member data");
    }
    if (name.ends_with('/')) {
      continue;
    }
    auto raw = d.substr(data_off, csize);
    std::string bytes;
    if (method == 0) {
      bytes = std::string(raw);
    } else if (method == 8) {
      bytes = inflate_raw(raw, usize);
    } else {
      corrupt("unsupported compression method " + std::to_string(method));
    }
    if (crc32(0, reinterpret_cast<Bytef const *>(bytes.data()), static_cast<uInt>(bytes.size())) != crc) {
      corrupt("crc mismatch for " + name);
    }
    bool exec = ((external >> 16) & 0111) != 0;
    out.push_back({name, std::move(bytes), exec});
  }
  return out;
}

std::string pack_directory(fs::path const &root, std::vector<std::string> const &paths) {
  std::vector<ArchiveEntry> entries;
  for (auto const &p : paths) {
    auto full = root / p;
    auto perms = fs::status(full).permissions();
    entries.push_back({p, read_file(full), (perms & fs::perms::owner_exec) != fs::perms::none});
  }
  return write_tar_gz(std::move(entries));
}

void extract_entries(std::vector<ArchiveEntry> const &entries, fs::path const &dest) {
  for (auto const &e : entries) {
    if (!is_safe_relative(e.path)) {
      throw Error(ErrorKind::SandboxEscape, "archive entry '" + e.path + "' escapes " + dest.string(),
                  {{"path", e.path}});
    }
  }
  for (auto const &e : entries) {
    auto target = dest / e.path;
    fs::create_directories(target.parent_path());
    {
      std::ofstream out(target, std::ios::binary | std::ios::trunc);
      out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
      if (!out) {
        throw Error(ErrorKind::StorageFailure, "cannot write " + target.string());
      }
    }
    if (e.executable) {
      fs::permissions(target, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                      fs::perm_options::add);
    }
  }
}

} // namespace reef
