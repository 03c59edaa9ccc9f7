// Test double for the subprocess denoiser/enhancer protocol.
//
//   echo_backend echo-cond     FLDN -> returns the condition payload
//   echo_backend echo-x        FLDN -> returns x_t
//   echo_backend die-after N   answers N requests, then exits with status 1
//   echo_backend bad-magic     answers with a wrong response magic
//   echo_backend flag          FLDN -> every value is the null-condition byte
//
// FLEN requests are always echoed back unchanged.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

namespace {

bool read_exact(void* buf, std::size_t n) { return std::fread(buf, 1, n, stdin) == n; }

void write_all(const void* buf, std::size_t n) {
  if (std::fwrite(buf, 1, n, stdout) != n) std::exit(2);
}

template <typename T>
T get() {
  unsigned char b[sizeof(T)];
  if (!read_exact(b, sizeof b)) std::exit(0);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return 64;
  const std::string mode = argv[1];
  long budget = mode == "die-after" && argc > 2 ? std::atol(argv[2]) : -1;

  for (;;) {
    char magic[4];
    if (!read_exact(magic, 4)) return 0;
    if (budget == 0) return 1;
    const bool denoise = std::memcmp(magic, "FLDN", 4) == 0;
    const bool enhance = std::memcmp(magic, "FLEN", 4) == 0;
    if (!denoise && !enhance) return 3;
    const auto id = get<std::uint64_t>();
    std::uint8_t null_flag = 0;
    if (denoise) {
      (void)get<std::uint32_t>();  // t
      null_flag = get<std::uint8_t>();
    }
    std::uint32_t dims[4];
    for (auto& d : dims) d = get<std::uint32_t>();
    const std::size_t count = std::size_t{dims[0]} * dims[1] * dims[2] * dims[3];
    std::vector<char> x(count * 4), c;
    if (!read_exact(x.data(), x.size())) return 0;
    if (denoise) {
      c.resize(count * 4);
      if (!read_exact(c.data(), c.size())) return 0;
    }

    const char* reply = denoise ? "FLEP" : "FLEO";
    write_all(mode == "bad-magic" ? "XXXX" : reply, 4);
    unsigned char idb[8];
    for (int i = 0; i < 8; ++i) idb[i] = static_cast<unsigned char>(id >> (8 * i));
    write_all(idb, 8);
    if (denoise && mode == "echo-cond") {
      write_all(c.data(), c.size());
    } else if (denoise && mode == "flag") {
      float f = static_cast<float>(null_flag);
      unsigned char fb[4];
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) fb[i] = static_cast<unsigned char>(bits >> (8 * i));
      for (std::size_t i = 0; i < count; ++i) write_all(fb, 4);
    } else {
      write_all(x.data(), x.size());
    }
    std::fflush(stdout);
    if (budget > 0) --budget;
  }
}
